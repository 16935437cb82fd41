"""
Record types shared by the solver, the analysis services and the CLI
"""

from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple
from dataclasses import dataclass, field, fields, is_dataclass
from datetime import datetime
import uuid


class Equation(Enum):
    """Evolution equation selector"""
    HLLG = "HLLG"  # damped half-Landau-Lifshitz-Gilbert
    HHHF = "HHHF"  # half-harmonic heat flow
    HWM = "HWM"    # half-wave map
    LLGR = "LLGR"  # regularized HLLG


class Scheme(Enum):
    """Time integrators"""
    ETDRK2 = "ETDRK2"
    RK4 = "RK4"


class CheckStatus(Enum):
    """Outcome of an analysis check"""
    PASS = "pass"
    FAIL = "fail"
    OUTSIDE_HYPOTHESIS = "outside_hypothesis"
    INCONCLUSIVE = "inconclusive"

    @property
    def is_failure(self) -> bool:
        return self is CheckStatus.FAIL


class ThresholdClass(Enum):
    """Threshold-sweep classification of a long run"""
    DECAYED = "decayed"
    CONCENTRATING = "concentrating"
    PERSISTENT = "persistent"
    INCONCLUSIVE = "inconclusive"


class EventType(Enum):
    """Events emitted while a trajectory is advanced"""
    RUN_STARTED = "run_started"
    SAMPLE_RECORDED = "sample_recorded"
    SNAPSHOT_DUE = "snapshot_due"
    RUN_COMPLETED = "run_completed"
    RUN_FAILED = "run_failed"


def seminorm_column(s: float) -> str:
    """CSV column name for the H^s seminorm"""
    return f"Hs_{s:g}"


def parse_seminorm_column(name: str) -> float:
    return float(name[len("Hs_"):])


FIXED_LEADING = ("t", "E", "E_eps")
FIXED_TRAILING = ("dist_L2", "dist_Linf", "dissipation", "drift", "grad_seminorm")


@dataclass
class DiagnosticsRow:
    """Per-sample record of energies, seminorms, distances, ledger and drift"""
    t: float
    E: float
    E_eps: float
    seminorms: Dict[float, float] = field(default_factory=dict)
    dist_L2: float = 0.0
    dist_Linf: float = 0.0
    dissipation: float = 0.0
    drift: float = 0.0
    grad_seminorm: float = 0.0

    @staticmethod
    def csv_header(orders: Sequence[float]) -> List[str]:
        """t,E,E_eps,Hs_{s...},dist_L2,dist_Linf,dissipation,drift,grad_seminorm"""
        return [*FIXED_LEADING, *(seminorm_column(s) for s in orders), *FIXED_TRAILING]

    def csv_values(self, orders: Sequence[float]) -> List[float]:
        return [self.t, self.E, self.E_eps, *(self.seminorms[s] for s in orders),
                self.dist_L2, self.dist_Linf, self.dissipation, self.drift, self.grad_seminorm]

    @classmethod
    def from_csv_values(cls, header: Sequence[str], values: Sequence[float]) -> "DiagnosticsRow":
        record = dict(zip(header, values))
        seminorms = {parse_seminorm_column(k): v for k, v in record.items() if k.startswith("Hs_")}
        return cls(seminorms=seminorms, **{k: v for k, v in record.items() if not k.startswith("Hs_")})

    def seminorm(self, s: float) -> float:
        """Recorded H^s seminorm; KeyError if s was not sampled"""
        for order, value in self.seminorms.items():
            if abs(order - s) < 1e-12:
                return value
        raise KeyError(s)

    def to_dict(self) -> Dict[str, Any]:
        """Convert row to dictionary"""
        out = {"t": self.t, "E": self.E, "E_eps": self.E_eps}
        out.update({seminorm_column(s): v for s, v in sorted(self.seminorms.items())})
        out.update({
            "dist_L2": self.dist_L2,
            "dist_Linf": self.dist_Linf,
            "dissipation": self.dissipation,
            "drift": self.drift,
            "grad_seminorm": self.grad_seminorm,
        })
        return out


@dataclass
class RatioReport:
    """Empirical constant of one inequality over a batch of random samples"""
    inequality_id: str
    n: int
    trials: int
    max_ratio: float
    ratio_at_refinement: Optional[float] = None
    degenerate: int = 0
    inconsistent: int = 0
    band: int = 0
    amplitude: float = 1.0
    seed_range: Tuple[int, int] = (0, 0)
    status: CheckStatus = CheckStatus.PASS

    @property
    def refinement_variation(self) -> Optional[float]:
        """|r_fine - r| / r, None when unrefined or degenerate"""
        if self.ratio_at_refinement is None or self.max_ratio == 0:
            return None
        return abs(self.ratio_at_refinement - self.max_ratio) / self.max_ratio

    def to_dict(self) -> Dict[str, Any]:
        return {
            "inequality_id": self.inequality_id,
            "n": self.n,
            "trials": self.trials,
            "max_ratio": self.max_ratio,
            "ratio_at_refinement": self.ratio_at_refinement,
            "refinement_variation": self.refinement_variation,
            "degenerate": self.degenerate,
            "inconsistent": self.inconsistent,
            "band": self.band,
            "amplitude": self.amplitude,
            "seed_range": list(self.seed_range),
            "status": self.status.value,
        }


@dataclass
class LedgerReport:
    """Energy identity defect of a trajectory"""
    trajectory_id: str
    alpha: float
    defect: float
    defect_series: List[float] = field(default_factory=list)
    order: Optional[float] = None
    status: CheckStatus = CheckStatus.PASS

    def to_dict(self) -> Dict[str, Any]:
        return {
            "trajectory_id": self.trajectory_id,
            "alpha": self.alpha,
            "defect": self.defect,
            "order": self.order,
            "samples": len(self.defect_series),
            "status": self.status.value,
        }


@dataclass
class CheckReport:
    """Generic outcome of an analysis check with its measured quantities"""
    name: str
    status: CheckStatus
    values: Dict[str, Any] = field(default_factory=dict)
    message: str = ""
    first_violation_t: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        out = {"name": self.name, "status": self.status.value, **self.values}
        if self.message:
            out["message"] = self.message
        if self.first_violation_t is not None:
            out["first_violation_t"] = self.first_violation_t
        return out


@dataclass
class ExperimentSummary:
    """Table of per-run rows produced by an experiment or a sweep"""
    name: str
    rows: List[Dict[str, Any]] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    id: str = field(default_factory=lambda: str(uuid.uuid4()))
    timestamp: datetime = field(default_factory=datetime.now)

    @property
    def status(self) -> CheckStatus:
        statuses = [r.get("status") for r in self.rows]
        if CheckStatus.FAIL.value in statuses:
            return CheckStatus.FAIL
        if statuses and all(s == CheckStatus.INCONCLUSIVE.value for s in statuses):
            return CheckStatus.INCONCLUSIVE
        return CheckStatus.PASS

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "name": self.name,
            "timestamp": self.timestamp.isoformat(),
            "status": self.status.value,
            "rows": self.rows,
            "notes": self.notes,
        }


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, Enum):
        return str(value.value)
    return str(value)


def render_text(report: Any) -> str:
    """Human-readable summary of any report record"""
    if isinstance(report, ExperimentSummary):
        lines = [f"== {report.name} [{report.status.value}] =="]
        columns: List[str] = []
        for row in report.rows:
            columns.extend(k for k in row if k not in columns)
        if columns:
            table = [columns] + [[_format_value(row.get(c, "")) for c in columns] for row in report.rows]
            widths = [max(len(r[i]) for r in table) for i in range(len(columns))]
            for r in table:
                lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
        lines.extend(f"note: {note}" for note in report.notes)
        return "\n".join(lines)

    if hasattr(report, "to_dict"):
        data = report.to_dict()
    elif is_dataclass(report):
        data = {f.name: getattr(report, f.name) for f in fields(report)}
    else:
        data = dict(report)
    title = data.get("name") or data.get("inequality_id") or data.get("trajectory_id") or type(report).__name__
    lines = [f"== {title} =="]
    width = max((len(k) for k in data), default=0)
    for key, value in data.items():
        lines.append(f"{key.ljust(width)} : {_format_value(value)}")
    return "\n".join(lines)
