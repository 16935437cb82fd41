"""
Experiment service
Scripted multi-run studies: small-data verification, epsilon continuation,
half-wave conservation, the energy-threshold sweep for the heat flow, the
uniqueness study, and a generic one-parameter sweep driver
"""

from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union
import inspect
import json
import logging
import os

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.optimize import brentq

from config.sim_config import ChecksSection, Config, InitialDataSection, OutputSection
from core.dynamics import SimParams, Trajectory, run
from core.errors import ParameterError
from core.field import SphereField, make_great_circle, make_perturbation, winding_number
from core.norms import energy, lp_norm
from core.records import CheckStatus, Equation, ExperimentSummary, ThresholdClass, Scheme
from core.spectral import NodalField, SpectralGrid, forward_transform
from services.analysis_service import (
    check_decay,
    check_L2_growth,
    check_monotone_estimates,
    check_stability,
    sobolev_distance,
    worst_status,
)
from services.io_service import content_hash, write_snapshot, write_summary, write_timeseries
from services.simulation_service import SimulationService, equator_profile

logger = logging.getLogger(__name__)

# default boxes: eight periods of 2 pi, nodes per axis by dimension
DEFAULT_BOX_LENGTH = 16 * np.pi
DEFAULT_DIMS = {1: 512, 2: 128, 3: 64}

# threshold sweep classification
TAIL_LIMIT = 1e-3
DECAY_RATIO = 1e-2
GROWTH_RATIO = 2.0

PathLike = Union[str, Path]


def default_grid(n: int, dims: Optional[int] = None, box_length: float = DEFAULT_BOX_LENGTH) -> SpectralGrid:
    if n not in DEFAULT_DIMS:
        raise ParameterError(f"n must be 1, 2 or 3, got {n}")
    return SpectralGrid.create(n, dims or DEFAULT_DIMS[n], box_length)


def _north_pole(components: int = 3) -> np.ndarray:
    q = np.zeros(components)
    q[-1] = 1.0
    return q


def _persist(trajectory: Trajectory, out_dir: Optional[PathLike], name: str) -> Dict[str, Any]:
    """Write CSV and final snapshot of a trajectory; return their paths and hashes"""
    if out_dir is None:
        return {}
    out_dir = Path(out_dir)
    csv_path = write_timeseries(trajectory.rows, out_dir / f"{name}.csv", trajectory.orders)
    snap_path = write_snapshot(trajectory.final, trajectory.t_final, out_dir / f"{name}_final.hllg")
    return {
        "csv": str(csv_path),
        "csv_sha256": content_hash(csv_path),
        "snapshot": str(snap_path),
        "snapshot_sha256": content_hash(snap_path),
    }


# ---------------------------------------------------------------------------
# Small data
# ---------------------------------------------------------------------------

def exp_small_data(n: int, amplitudes: Sequence[float], params: Optional[SimParams] = None,
                   grid: Optional[SpectralGrid] = None, kmax: int = 2, seed: int = 0,
                   out_dir: Optional[PathLike] = None) -> ExperimentSummary:
    """Monotone estimates k = 1..n+1, decay and L^2 growth per initial amplitude

    Rows are sorted by amplitude. If an amplitude passes every check while a
    smaller one does not, the pair is noted as an anomaly.
    """
    params = params or SimParams(equation=Equation.HLLG, damping=1.0, dt=1e-3, T=1.0, sample_every=5)
    grid = grid or default_grid(n)
    if grid.n != n:
        raise ParameterError(f"grid dimension {grid.n} does not match n={n}")
    summary = ExperimentSummary(name=f"small_data n={n}")

    for i, amplitude in enumerate(sorted(amplitudes)):
        u0, size = make_perturbation(grid, _north_pole(), amplitude, kmax, seed, params.dealias)
        row: Dict[str, Any] = {"amplitude": float(amplitude), "h_norm": size}
        trajectory = run(u0, params, raise_errors=False, run_id=f"small-{i:03d}")
        if trajectory.error is not None:
            row.update({"status": CheckStatus.FAIL.value, "error": str(trajectory.error)})
            summary.rows.append(row)
            continue
        monotone = [check_monotone_estimates(trajectory, k) for k in range(1, n + 2)]
        decay = check_decay(trajectory)
        growth = check_L2_growth(trajectory)
        for report in monotone:
            row[report.name] = report.status.value
        row["decay"] = decay.status.value
        row["decay_ratio"] = decay.values["decay_ratio"]
        row["l2_growth"] = growth.status.value
        row["status"] = worst_status(monotone + [decay, growth]).value
        row.update(_persist(trajectory, out_dir, f"small_data_{i:03d}"))
        summary.rows.append(row)
        logger.info(f"small data a={amplitude:g} |u0|={size:.4g}: {row['status']}")

    passing = [r["status"] == CheckStatus.PASS.value for r in summary.rows]
    for i, ok in enumerate(passing):
        if ok and not all(passing[:i]):
            summary.notes.append(f"anomaly: amplitude {summary.rows[i]['amplitude']:g} passes "
                                 f"while a smaller amplitude does not")
    return summary


# ---------------------------------------------------------------------------
# Epsilon continuation
# ---------------------------------------------------------------------------

def _eps_params(base: SimParams, eps: float) -> SimParams:
    if eps > 0:
        return base.replace(equation=Equation.LLGR, eps=eps)
    return base.replace(equation=Equation.HLLG, eps=0.0)


def _sup_distance(a: Trajectory, b: Trajectory, s: float) -> float:
    return max(sobolev_distance(ua, ub, s) for (_, ua), (_, ub) in zip(a.states, b.states))


def exp_epsilon_sweep(n: int, eps_values: Sequence[float], u0: Optional[SphereField] = None,
                      params: Optional[SimParams] = None, amplitude: float = 0.05,
                      seed: int = 0, out_dir: Optional[PathLike] = None) -> ExperimentSummary:
    """sup_t |u^(eps_i) - u^(eps_i+1)|_{H^(n/2)} down a non-increasing eps list

    eps = 0 runs the unregularized flow and serves as the limit candidate.
    """
    eps_values = [float(e) for e in eps_values]
    if len(eps_values) < 2:
        raise ParameterError("epsilon sweep needs at least two values")
    if any(e < 0 for e in eps_values) or any(a < b for a, b in zip(eps_values, eps_values[1:])):
        raise ParameterError(f"eps values must be non-negative and non-increasing: {eps_values}")
    base = params or SimParams(equation=Equation.HLLG, damping=1.0, dt=1e-3, T=1.0, sample_every=10)
    if u0 is None:
        u0, _ = make_perturbation(default_grid(n), _north_pole(), amplitude, 2, seed, base.dealias)
    s = u0.grid.n / 2.0

    trajectories, artifacts = [], []
    for i, eps in enumerate(eps_values):
        traj = run(u0, _eps_params(base, eps), keep_states=True, run_id=f"eps-{i:02d}")
        artifacts.append(_persist(traj, out_dir, f"eps_{i:02d}"))
        trajectories.append(traj)

    limit = trajectories[-1] if eps_values[-1] == 0 else None
    summary = ExperimentSummary(name=f"epsilon_sweep n={u0.grid.n}")
    previous = None
    for i in range(len(eps_values) - 1):
        a, b = eps_values[i], eps_values[i + 1]
        difference = _sup_distance(trajectories[i], trajectories[i + 1], s)
        row: Dict[str, Any] = {"eps_a": a, "eps_b": b, "sup_difference": difference}
        if limit is not None:
            row["to_limit"] = _sup_distance(trajectories[i], limit, s)
        if a == b:
            ok = difference == 0.0
        else:
            ok = previous is None or difference < previous
            previous = difference
        row["status"] = (CheckStatus.PASS if ok else CheckStatus.FAIL).value
        summary.rows.append(row)

    positive = [(e, r["to_limit"]) for e, r in zip(eps_values, summary.rows)
                if limit is not None and e > 0 and r["to_limit"] > 0]
    if len(positive) >= 2:
        eps, dist = np.array(positive).T
        order = float(np.polyfit(np.log(eps), np.log(dist), 1)[0])
        summary.notes.append(f"fitted order |u^eps - u^0| ~ eps^{order:.3g}")
    for eps, files in zip(eps_values, artifacts):
        if files:
            summary.notes.append(f"eps={eps:g}: {files['csv']} sha256={files['csv_sha256']}")
    return summary


# ---------------------------------------------------------------------------
# Half-wave conservation
# ---------------------------------------------------------------------------

def exp_conservative(n: int = 1, dt: float = 1e-3, T: float = 1.0, amplitude: float = 0.05,
                     kmax: int = 2, seed: int = 0, grid: Optional[SpectralGrid] = None,
                     tolerance: float = 1e-6, out_dir: Optional[PathLike] = None) -> ExperimentSummary:
    """Relative energy drift of the half-wave map under RK4 at dt and dt/2"""
    grid = grid or default_grid(n)
    params = SimParams(equation=Equation.HWM, damping=0.0, eps=0.0, scheme=Scheme.RK4,
                       dt=dt, T=T, sample_every=max(1, int(round(0.1 / dt))))
    u0, _ = make_perturbation(grid, _north_pole(), amplitude, kmax, seed, params.dealias)
    summary = ExperimentSummary(name=f"conservative n={grid.n}")
    drifts = []
    for level, step in enumerate((dt, dt / 2)):
        p = params.replace(dt=step, sample_every=params.sample_every * 2 ** level)
        traj = run(u0, p, run_id=f"hwm-{level}")
        energies = traj.column("E")
        drift = abs(energies[-1] - energies[0]) / energies[0] if energies[0] > 0 else 0.0
        drifts.append(drift)
        summary.rows.append({
            "dt": step,
            "E0": float(energies[0]),
            "E_T": float(energies[-1]),
            "relative_drift": float(drift),
            "status": (CheckStatus.PASS if drift <= tolerance else CheckStatus.FAIL).value,
            **_persist(traj, out_dir, f"hwm_{level}"),
        })
    if drifts[0] > 0 and drifts[1] > 0:
        summary.notes.append(f"drift order in dt: {np.log2(drifts[0] / drifts[1]):.3g}")
    return summary


# ---------------------------------------------------------------------------
# Threshold sweep
# ---------------------------------------------------------------------------

def tune_equator_amplitude(grid: SpectralGrid, target: float, degree: int,
                           max_expansions: int = 40) -> float:
    """Amplitude a with E(equator map of degree + a sin) = target"""
    def excess(a: float) -> float:
        return energy(make_great_circle(grid, equator_profile(grid, degree, a))) - target

    low = excess(0.0)
    if abs(low) <= 1e-12 * max(1.0, target):
        return 0.0
    if low > 0:
        raise ParameterError(f"degree-{degree} equator maps have energy ≥ {low + target:.6g} > {target:g}")
    high = 1.0
    for _ in range(max_expansions):
        if excess(high) > 0:
            return float(brentq(excess, 0.0, high, xtol=1e-12))
        high *= 2.0
    raise ParameterError(f"energy {target:g} not reachable by degree-{degree} equator maps on this grid")


def spectral_tail_fraction(u: SphereField) -> float:
    """Share of the non-constant L^2 mass in modes with |k_j| > N_j/4 on some axis"""
    F = forward_transform(u)
    mass = np.sum(np.abs(F.coeffs) ** 2, axis=0)
    zero = tuple([0] * u.grid.n)
    mass[zero] = 0.0
    tail = np.zeros(u.grid.shape, dtype=bool)
    for k, d in zip(u.grid.mode_indices, u.grid.dims):
        tail = tail | (np.abs(k) > d / 4)
    total = float(np.sum(mass))
    return float(np.sum(mass[tail]) / total) if total > 0 else 0.0


def classify_threshold_run(trajectory: Trajectory) -> Tuple[ThresholdClass, Dict[str, Any]]:
    """Decayed, concentrating, persistent, or inconclusive when unresolved"""
    values: Dict[str, Any] = {}
    if trajectory.error is not None:
        values["message"] = f"{type(trajectory.error).__name__}: refine the grid or shorten dt"
        return ThresholdClass.INCONCLUSIVE, values
    tail = spectral_tail_fraction(trajectory.final)
    grad = trajectory.column("grad_seminorm")
    values.update({"tail_fraction": tail, "grad_initial": float(grad[0]), "grad_final": float(grad[-1])})
    if tail > TAIL_LIMIT:
        values["message"] = "spectral tail at the cutoff: refine the grid"
        return ThresholdClass.INCONCLUSIVE, values
    if grad[0] == 0 or grad[-1] < DECAY_RATIO * grad[0]:
        return ThresholdClass.DECAYED, values
    if np.max(grad) > GROWTH_RATIO * grad[0]:
        return ThresholdClass.CONCENTRATING, values
    return ThresholdClass.PERSISTENT, values


def exp_threshold_sweep(energies: Sequence[float], grid: Optional[SpectralGrid] = None,
                        params: Optional[SimParams] = None, refinements: int = 2,
                        out_dir: Optional[PathLike] = None) -> ExperimentSummary:
    """Classify heat-flow runs from equator maps of prescribed energy

    Energies below pi use degree-zero data, energies from pi up use degree one
    (the rotation map has energy exactly pi). Each energy is run on a ladder of
    grids; a class that changes between refinements is reported inconclusive.
    """
    grid = grid or SpectralGrid.create(1, 256, 2 * np.pi)
    if grid.n != 1:
        raise ParameterError("the threshold sweep runs on one-dimensional grids")
    if refinements < 1:
        raise ParameterError(f"refinements must be ≥ 1, got {refinements}")
    params = params or SimParams(equation=Equation.HHHF, dt=1e-3, T=5.0, sample_every=50)
    if params.equation is not Equation.HHHF:
        raise ParameterError("the threshold sweep runs the half-harmonic heat flow")

    summary = ExperimentSummary(name="threshold_sweep")
    for i, target in enumerate(sorted(energies)):
        degree = 0 if target < np.pi else 1
        amplitude = tune_equator_amplitude(grid, target, degree)
        classes: List[ThresholdClass] = []
        row: Dict[str, Any] = {"energy": float(target), "degree": degree, "amplitude": amplitude}
        ladder = [grid.refined(2 ** level) for level in range(refinements)]
        for level, g in enumerate(ladder):
            u0 = make_great_circle(g, equator_profile(g, degree, amplitude))
            if level == 0:
                row["measured_degree"] = winding_number(u0)
            traj = run(u0, params, raise_errors=False, run_id=f"threshold-{i:02d}-{level}")
            run_class, values = classify_threshold_run(traj)
            classes.append(run_class)
            row[f"class_N{g.dims[0]}"] = run_class.value
            if level == refinements - 1:
                row.update({k: v for k, v in values.items() if k != "message"})
                if "message" in values:
                    row["advice"] = values["message"]
            files = _persist(traj, out_dir, f"threshold_{i:02d}_N{g.dims[0]}")
            if files:
                row[f"csv_sha256_N{g.dims[0]}"] = files["csv_sha256"]

        final = classes[0] if len(set(classes)) == 1 else ThresholdClass.INCONCLUSIVE
        if final is ThresholdClass.INCONCLUSIVE and len(set(classes)) > 1:
            row["advice"] = "class changes under refinement: extend the ladder"
        row["class"] = final.value
        row["status"] = (CheckStatus.INCONCLUSIVE if final is ThresholdClass.INCONCLUSIVE
                         else CheckStatus.PASS).value
        if final is not ThresholdClass.DECAYED:
            logger.warning(f"threshold E={target:.4g}: {final.value}")
        summary.rows.append(row)

    window = transition_window(summary.rows)
    if window is not None:
        summary.notes.append(f"transition window: E in ({window[0]:.6g}, {window[1]:.6g}]")
    return summary


def transition_window(rows: Sequence[Dict[str, Any]]) -> Optional[Tuple[float, float]]:
    """Largest decayed energy and the next energy whose class is resolved but not decayed"""
    resolved = [(r["energy"], r["class"]) for r in rows if r["class"] != ThresholdClass.INCONCLUSIVE.value]
    for (e0, c0), (e1, c1) in zip(resolved, resolved[1:]):
        if c0 == ThresholdClass.DECAYED.value and c1 != ThresholdClass.DECAYED.value:
            return e0, e1
    return None


# ---------------------------------------------------------------------------
# Uniqueness
# ---------------------------------------------------------------------------

def cross_integrator_order(u0: SphereField, params: SimParams) -> Dict[str, Any]:
    """|u_ETDRK2(T) - u_RK4(T)|_{L^2} at dt and dt/2, and the observed order"""
    diffs = []
    for level in range(2):
        p = params.replace(dt=params.dt / 2 ** level, sample_every=params.sample_every * 2 ** level)
        a = run(u0, p.replace(scheme=Scheme.ETDRK2), run_id=f"etd-{level}")
        b = run(u0, p.replace(scheme=Scheme.RK4), run_id=f"rk4-{level}")
        diffs.append(lp_norm(NodalField(u0.grid, a.final.values - b.final.values), 2))
    order = float(np.log2(diffs[0] / diffs[1])) if diffs[0] > 0 and diffs[1] > 0 else None
    resolved = max(diffs) < 1e-13 or (order is not None and order >= 1.5)
    return {
        "name": "cross_integrator",
        "difference_dt": diffs[0],
        "difference_half_dt": diffs[1],
        "order": order,
        "status": (CheckStatus.PASS if resolved else CheckStatus.FAIL).value,
    }


def exp_uniqueness(params: SimParams, deltas: Sequence[float], u0: Optional[SphereField] = None,
                   n: int = 1, amplitude: float = 0.05, seed: int = 0,
                   stability: float = 0.2) -> ExperimentSummary:
    """Gronwall envelopes per delta0, their variation, and ETDRK2 against RK4"""
    if u0 is None:
        u0, _ = make_perturbation(default_grid(n), _north_pole(), amplitude, 2, seed, params.dealias)
    summary = ExperimentSummary(name=f"uniqueness n={u0.grid.n}")
    constants = []
    for delta0 in deltas:
        report = check_stability(u0, delta0, params, seed=seed + 1)
        summary.rows.append({"delta0": float(delta0), **report.to_dict()})
        if delta0 > 0:
            constants.append(report.values["sup_ratio"])

    if len(constants) >= 2:
        spread = (max(constants) - min(constants)) / max(constants)
        summary.rows.append({
            "name": "envelope_variation",
            "variation": float(spread),
            "status": (CheckStatus.PASS if spread < stability else CheckStatus.FAIL).value,
        })
    summary.rows.append(cross_integrator_order(u0, params))
    return summary


# ---------------------------------------------------------------------------
# Generic sweeps
# ---------------------------------------------------------------------------

class SweepSpec(BaseModel):
    """One parameter varied over a monotone list, everything else fixed"""

    model_config = ConfigDict(extra="forbid")

    name: str = "sweep"
    n: int = 1
    dims: Optional[int] = None
    box_length: float = DEFAULT_BOX_LENGTH
    params: SimParams = SimParams()
    initial_data: InitialDataSection = InitialDataSection()
    parameter: Literal["amplitude", "eps", "dt", "box_length"]
    values: List[float]
    checks: List[str] = []
    output_key: str = "sweep"

    @field_validator("values")
    @classmethod
    def validate_values(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("values must not be empty")
        steps = np.diff(v)
        if len(v) > 1 and not (np.all(steps > 0) or np.all(steps < 0)):
            raise ValueError("values must be strictly monotone")
        return v

    @model_validator(mode="after")
    def validate_checks(self) -> "SweepSpec":
        switches = {name for name, f in ChecksSection.model_fields.items() if f.annotation is bool}
        unknown = set(self.checks) - switches
        if unknown:
            raise ValueError(f"unknown checks: {', '.join(sorted(unknown))}")
        return self

    @classmethod
    def from_file(cls, path: PathLike) -> "SweepSpec":
        with open(path, "r", encoding="utf-8") as f:
            return cls.model_validate(json.load(f))

    def case(self, index: int, out_dir: PathLike) -> Config:
        """Run configuration of one sweep value"""
        value = self.values[index]
        params, initial = self.params, self.initial_data
        box_length = self.box_length
        if self.parameter == "amplitude":
            initial = initial.model_copy(update={"amplitude": value})
        elif self.parameter == "eps":
            params = _eps_params(params, value)
        elif self.parameter == "dt":
            params = params.replace(dt=value)
        else:
            box_length = value
        return Config(
            grid=default_grid(self.n, self.dims, box_length),
            params=params,
            initial_data=initial,
            output=OutputSection(directory=str(Path(out_dir) / self.output_key),
                                 prefix=f"{self.name}_{index:03d}"),
            checks=ChecksSection(**{name: True for name in self.checks}),
        )


def _run_case(job: Tuple[int, str, float, Config]) -> Dict[str, Any]:
    index, parameter, value, config = job
    result = SimulationService(config).run()
    trajectory = result.trajectory
    row: Dict[str, Any] = {"index": index, parameter: value, "run_id": trajectory.run_id}
    if trajectory.rows:
        row["E_final"] = trajectory.rows[-1].E
        row["dist_L2_final"] = trajectory.rows[-1].dist_L2
    for report in result.reports:
        label = getattr(report, "name", None) or "energy_identity"
        row[label] = report.status.value
    if trajectory.error is not None:
        row["error"] = str(trajectory.error)
    for name, path in result.artifacts.items():
        row[f"{name}_sha256"] = content_hash(path)
    row["status"] = result.status.value
    return row


def run_sweep(spec: SweepSpec, out_dir: PathLike, workers: int = 1) -> ExperimentSummary:
    """Run every sweep value, in a process pool when workers > 1

    Per-run CSV and snapshots go to out_dir/<output_key>/; the summary CSV with
    content hashes is written next to them.
    """
    jobs = [(i, spec.parameter, v, spec.case(i, out_dir)) for i, v in enumerate(spec.values)]
    workers = workers or os.cpu_count() or 1
    logger.info(f"sweep {spec.name}: {len(jobs)} runs over {spec.parameter}, {workers} workers")
    if workers == 1 or len(jobs) == 1:
        rows = [_run_case(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_case, jobs))

    summary = ExperimentSummary(name=spec.name, rows=sorted(rows, key=lambda r: r["index"]))
    path = write_summary(summary, Path(out_dir) / spec.output_key / f"{spec.name}_summary.csv")
    summary.notes.append(f"summary: {path}")
    return summary


EXPERIMENTS: Dict[str, Callable[..., ExperimentSummary]] = {
    "small_data": exp_small_data,
    "epsilon_sweep": exp_epsilon_sweep,
    "conservative": exp_conservative,
    "threshold_sweep": exp_threshold_sweep,
    "uniqueness": exp_uniqueness,
}


def run_spec_file(path: PathLike, out_dir: PathLike, workers: int = 1) -> ExperimentSummary:
    """Run a JSON spec: a named experiment with arguments, or a SweepSpec"""
    with open(path, "r", encoding="utf-8") as f:
        document = json.load(f)
    name = document.get("experiment")
    if name is None:
        return run_sweep(SweepSpec.model_validate(document), out_dir, workers)
    if name not in EXPERIMENTS:
        raise ParameterError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    arguments = dict(document.get("arguments", {}))
    if "params" in arguments:
        arguments["params"] = SimParams.model_validate(arguments["params"])
    target = Path(out_dir) / document.get("output_key", name)
    if "out_dir" in inspect.signature(EXPERIMENTS[name]).parameters:
        arguments["out_dir"] = target
    summary = EXPERIMENTS[name](**arguments)
    path = write_summary(summary, target / f"{name}_summary.csv")
    summary.notes.append(f"summary: {path}")
    return summary
