"""
State machine for the lifecycle of one trajectory
"""

from enum import Enum
from typing import Dict, Any, List, Optional, Tuple
from dataclasses import dataclass
from datetime import datetime
import logging

logger = logging.getLogger(__name__)


class RunState(Enum):
    """Trajectory states"""
    INITIALIZING = "initializing"
    READY = "ready"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class StateTransition:
    """State transition definition"""
    from_state: RunState
    to_state: RunState
    description: str = ""


class RunStateMachine:
    """Tracks a trajectory from validation through completion or failure"""

    def __init__(self, run_id: str = "", initial_state: RunState = RunState.INITIALIZING):
        self.run_id = run_id
        self.current_state = initial_state
        self.state_history: List[Tuple[RunState, datetime, str]] = []
        self.transitions: List[StateTransition] = []
        self._setup_default_transitions()

    def _setup_default_transitions(self):
        """Setup default state transitions"""
        self.add_transition(RunState.INITIALIZING, RunState.READY,
                            description="Initial data and parameters validated")
        self.add_transition(RunState.INITIALIZING, RunState.FAILED,
                            description="Validation failed")
        self.add_transition(RunState.READY, RunState.RUNNING,
                            description="Time stepping started")
        self.add_transition(RunState.RUNNING, RunState.COMPLETED,
                            description="Horizon reached")
        self.add_transition(RunState.RUNNING, RunState.FAILED,
                            description="Step error during time stepping")

    def add_transition(self, from_state: RunState, to_state: RunState, description: str = ""):
        """Add a new state transition"""
        self.transitions.append(StateTransition(from_state, to_state, description))

    def _find(self, target_state: RunState) -> Optional[StateTransition]:
        for t in self.transitions:
            if t.from_state == self.current_state and t.to_state == target_state:
                return t
        return None

    def can_transition_to(self, target_state: RunState) -> bool:
        """Check if transition to target state is allowed"""
        return self._find(target_state) is not None

    def transition_to(self, target_state: RunState, reason: str = "") -> bool:
        """Attempt to transition to target state"""
        transition = self._find(target_state)
        if transition is None:
            logger.warning(f"[{self.run_id}] cannot transition from {self.current_state.value} "
                           f"to {target_state.value}")
            return False

        old_state = self.current_state
        self.current_state = target_state
        self.state_history.append((old_state, datetime.now(), reason or transition.description))
        logger.info(f"[{self.run_id}] {old_state.value} -> {target_state.value} "
                    f"({reason or transition.description})")
        return True

    def get_state_info(self) -> Dict[str, Any]:
        """Get current state information"""
        return {
            "run_id": self.run_id,
            "current_state": self.current_state.value,
            "state_history": [
                {"state": state.value, "timestamp": timestamp.isoformat(), "reason": reason}
                for state, timestamp, reason in self.state_history
            ],
        }

    def is_in_state(self, state: RunState) -> bool:
        return self.current_state == state

    @property
    def is_terminal(self) -> bool:
        return self.current_state in (RunState.COMPLETED, RunState.FAILED)
