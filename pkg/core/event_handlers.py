"""
Run events and the processor that dispatches them to registered sinks
"""

from typing import Dict, Any, Optional, Callable, List
from dataclasses import dataclass, field
from datetime import datetime
import logging

from .records import DiagnosticsRow, EventType

logger = logging.getLogger(__name__)

Handler = Callable[["EventContext", Any], None]


@dataclass
class EventContext:
    """Context for event processing"""
    run_id: str
    t: float = 0.0
    step: int = 0
    timestamp: datetime = field(default_factory=datetime.now)
    metadata: Dict[str, Any] = field(default_factory=dict)


class EventProcessor:
    """Dispatches run events to handlers in registration order

    Handlers are called synchronously on the thread advancing the trajectory.
    A failing handler is logged and, with raise_errors, aborts the run.
    """

    def __init__(self, raise_errors: bool = True):
        self.handlers: Dict[EventType, List[Handler]] = {}
        self.raise_errors = raise_errors

    def register_handler(self, event_type: EventType, handler: Handler):
        """Register a handler for an event type"""
        self.handlers.setdefault(event_type, []).append(handler)

    def unregister_handler(self, event_type: EventType, handler: Handler):
        if event_type in self.handlers:
            try:
                self.handlers[event_type].remove(handler)
            except ValueError:
                pass

    def register_sink(self, sink: Any):
        """Register every on_<event> method a sink defines"""
        for event_type in EventType:
            handler = getattr(sink, f"on_{event_type.value}", None)
            if callable(handler):
                self.register_handler(event_type, handler)

    def process_event(self, event_type: EventType, context: EventContext, data: Any = None):
        """Process an event with every handler registered for it"""
        for handler in self.handlers.get(event_type, []):
            try:
                handler(context, data)
            except Exception as e:
                logger.error(f"Error in {event_type.value} handler "
                             f"{getattr(handler, '__qualname__', handler)}: {e}")
                if self.raise_errors:
                    raise
        logger.debug(f"Event processed: {event_type.value} (t={context.t:.6g})")

    def get_handler_count(self, event_type: EventType) -> int:
        return len(self.handlers.get(event_type, []))


class MemorySink:
    """Collects diagnostic rows and run outcome in memory"""

    def __init__(self):
        self.rows: List[DiagnosticsRow] = []
        self.started: Optional[datetime] = None
        self.finished: Optional[datetime] = None
        self.error: Optional[str] = None

    def on_run_started(self, context: EventContext, data: Any):
        self.started = context.timestamp

    def on_sample_recorded(self, context: EventContext, row: DiagnosticsRow):
        self.rows.append(row)

    def on_run_completed(self, context: EventContext, data: Any):
        self.finished = context.timestamp

    def on_run_failed(self, context: EventContext, error: Exception):
        self.finished = context.timestamp
        self.error = str(error)

    @property
    def duration(self) -> Optional[float]:
        if self.started is None or self.finished is None:
            return None
        return (self.finished - self.started).total_seconds()
