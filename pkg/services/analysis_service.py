"""
Analysis service
Energy ledger, a-priori estimates, decay and stability checks on trajectories,
and the randomized ratio suite for the functional inequalities
"""

from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union
import json
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

import config.settings as settings
from core.dynamics import SimParams, Trajectory, run
from core.errors import DataError, ParameterError
from core.field import SphereField, band_limited_noise, random_tangent_field, renormalize
from core.norms import (
    bmo_norm,
    fractional_commutator,
    gradient_lp_norm,
    hessian_lp_norm,
    lp_norm,
    riesz_commutator,
    sobolev_seminorm,
)
from core.records import CheckReport, CheckStatus, LedgerReport, RatioReport
from core.spectral import (
    FourierField,
    NodalField,
    SpectralGrid,
    forward_transform,
    fractional_laplacian,
    inverse_transform,
    refine,
)

logger = logging.getLogger(__name__)

# RHS below this makes a ratio sample degenerate; LHS above the second is then inconsistent
DEGENERATE_RHS = 1e-14
DEGENERATE_LHS = 1e-12
MIN_TRIALS = 100

# Share of the run the stability envelope is fitted on, and the slack allowed on the rest
ENVELOPE_FIT_FRACTION = 0.5
ENVELOPE_MARGIN = 2.0

# Reference sampler grids for the Agmon calibration, and the factor accepted above its sampled maximum
AGMON_REFERENCE_DIMS = {1: 64, 2: 32, 3: 16}
AGMON_REFERENCE_TRIALS = 200
AGMON_SLACK = 1.5

PathLike = Union[str, Path]


# ---------------------------------------------------------------------------
# Ratio suite
# ---------------------------------------------------------------------------

class SamplerSpec(BaseModel):
    """Mean-zero band-limited random samples on a cubic periodic grid"""

    model_config = ConfigDict(frozen=True)

    n: int = 1
    dims: int = 64
    box_length: float = 2 * np.pi
    band: int = 4
    amplitude: float = 1.0
    seed: int = 0
    constant_coefficient: bool = False

    @field_validator("band")
    @classmethod
    def validate_band(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"band must be ≥ 1, got {v}")
        return v

    @field_validator("amplitude")
    @classmethod
    def validate_amplitude(cls, v: float) -> float:
        if v <= 0:
            raise ValueError(f"amplitude must be > 0, got {v}")
        return v

    def grid(self) -> SpectralGrid:
        return SpectralGrid.create(self.n, self.dims, self.box_length)

    def draw(self, trial: int, count: int) -> List[FourierField]:
        """count scalar samples for one trial, as spectra

        With constant_coefficient the first sample (the coefficient b or a)
        is the constant amplitude instead of noise.
        """
        grid = self.grid()
        rng = np.random.default_rng(self.seed + trial)
        band = int(rng.integers(1, self.band + 1))
        out = []
        for i in range(count):
            if i == 0 and self.constant_coefficient:
                out.append(forward_transform(NodalField(grid, np.full(grid.shape, self.amplitude))))
                continue
            noise = band_limited_noise(grid, 1, band, rng).values
            rms = np.sqrt(np.mean(noise ** 2))
            out.append(forward_transform(NodalField(grid, self.amplitude * noise / rms)))
        return out


def _crw(n: int, b: FourierField, f: FourierField) -> Tuple[float, float]:
    bn, fn = inverse_transform(b), inverse_transform(f)
    lhs = max(lp_norm(riesz_commutator(bn, fn, j), 2) for j in range(n))
    return lhs, bmo_norm(bn) * lp_norm(fn, 2)


def _kato_ponce(n: int, a: FourierField, f: FourierField) -> Tuple[float, float]:
    q, p, r = 2.0, 4.0 * n / (2 * n - 1), 4.0 * n
    an, fn = inverse_transform(a), inverse_transform(f)
    lhs = lp_norm(fractional_commutator(an, fn, 0.25), q)
    quarter = inverse_transform(fractional_laplacian(a, 0.25))
    return lhs, lp_norm(quarter, r) * lp_norm(fn, p)


def _gn(n: int, f: FourierField) -> Tuple[float, float]:
    return gradient_lp_norm(f, 4), np.sqrt(gradient_lp_norm(f, n) * hessian_lp_norm(f, 2))


def _sob1(n: int, f: FourierField) -> Tuple[float, float]:
    return lp_norm(f, 2.0 * n / (n - 1)), sobolev_seminorm(f, 0.5)


def _sob2(n: int, f: FourierField) -> Tuple[float, float]:
    return lp_norm(f, 2.0 * n), sobolev_seminorm(f, (n - 1) / 2.0)


def _gn2(n: int, f: FourierField) -> Tuple[float, float]:
    return lp_norm(f, 4.0 * n) ** 2, lp_norm(f, 2.0 * n) * gradient_lp_norm(f, n)


def _gn1(n: int, f: FourierField) -> Tuple[float, float]:
    return lp_norm(f, 4.0 * n / (2 * n - 1)) ** 4, lp_norm(f, 2) ** 2 * sobolev_seminorm(f, 0.5) ** 2


def _agmon(n: int, f: FourierField) -> Tuple[float, float]:
    theta = 1.0 / (n + 1)
    rhs = sobolev_seminorm(f, 0.0) ** theta * sobolev_seminorm(f, (n + 1) / 2.0) ** (1 - theta)
    return lp_norm(f, np.inf), rhs


def _interpolation(n: int, f: FourierField) -> Tuple[float, float]:
    return sobolev_seminorm(f, 0.5), np.sqrt(sobolev_seminorm(f, 0.0) * sobolev_seminorm(f, 1.0))


# id -> (evaluator, number of sampled fields, minimum dimension)
INEQUALITIES: Dict[str, Tuple[Callable[..., Tuple[float, float]], int, int]] = {
    "CRW": (_crw, 2, 1),
    "KATO_PONCE": (_kato_ponce, 2, 1),
    "GN": (_gn, 1, 1),
    "SOB1": (_sob1, 1, 2),
    "SOB2": (_sob2, 1, 1),
    "GN2": (_gn2, 1, 1),
    "GN1": (_gn1, 1, 1),
    "AGMON": (_agmon, 1, 1),
    "INTERPOLATION": (_interpolation, 1, 1),
}

# Inequalities that hold with constant 1 on every grid
EXACT_CONSTANT = {"INTERPOLATION"}


def normalize_id(inequality_id: str) -> str:
    key = inequality_id.upper().replace("-", "_")
    if key == "KATOPONCE":
        key = "KATO_PONCE"
    if key not in INEQUALITIES:
        raise ParameterError(f"unknown inequality id {inequality_id!r}; "
                             f"choose from {', '.join(INEQUALITIES)}")
    return key


def evaluate_ratio(inequality_id: str, samples: Sequence[FourierField]) -> Tuple[float, float]:
    """(LHS, RHS) of one inequality on given spectral samples"""
    key = normalize_id(inequality_id)
    evaluator, count, min_n = INEQUALITIES[key]
    if len(samples) != count:
        raise ParameterError(f"{key} takes {count} fields, got {len(samples)}")
    n = samples[0].grid.n
    if n < min_n:
        raise ParameterError(f"{key} exponents need n ≥ {min_n}, got n={n}")
    lhs, rhs = evaluator(n, *samples)
    return float(lhs), float(rhs)


def _max_ratio(key: str, batches: Sequence[Sequence[FourierField]]) -> Tuple[float, int, int]:
    best, degenerate, inconsistent = 0.0, 0, 0
    for samples in batches:
        lhs, rhs = evaluate_ratio(key, samples)
        if rhs < DEGENERATE_RHS:
            degenerate += 1
            if lhs > DEGENERATE_LHS:
                inconsistent += 1
            continue
        best = max(best, lhs / rhs)
    return best, degenerate, inconsistent


def verify_ratio(inequality_id: str, sampler: SamplerSpec, trials: int = 1000,
                 refine_grid: bool = True, calibration: Optional[float] = None) -> RatioReport:
    """Largest LHS/RHS over random samples, on the sampler grid and its 2x refinement

    The refined pass re-evaluates the same trigonometric polynomials on the finer grid.
    """
    key = normalize_id(inequality_id)
    _, count, min_n = INEQUALITIES[key]
    if sampler.n < min_n:
        raise ParameterError(f"{key} exponents need n ≥ {min_n}, got n={sampler.n}")
    if trials < MIN_TRIALS:
        raise ParameterError(f"ratio tests need at least {MIN_TRIALS} trials, got {trials}")

    batches = [sampler.draw(i, count) for i in range(trials)]
    best, degenerate, inconsistent = _max_ratio(key, batches)
    refined = None
    if refine_grid:
        refined, _, _ = _max_ratio(key, [[refine(f) for f in batch] for batch in batches])

    report = RatioReport(
        inequality_id=key, n=sampler.n, trials=trials, max_ratio=best,
        ratio_at_refinement=refined, degenerate=degenerate, inconsistent=inconsistent,
        band=sampler.band, amplitude=sampler.amplitude,
        seed_range=(sampler.seed, sampler.seed + trials - 1),
    )
    if inconsistent or not np.isfinite(best):
        report.status = CheckStatus.FAIL
    elif key in EXACT_CONSTANT and best > 1.0 + 1e-12:
        report.status = CheckStatus.FAIL
    elif calibration is not None and best > calibration:
        report.status = CheckStatus.FAIL
    if degenerate:
        logger.info(f"{key}: {degenerate} of {trials} samples degenerate")
    logger.info(f"{key} n={sampler.n}: max ratio {best:.6g}"
                + (f", refined {refined:.6g}" if refined is not None else ""))
    return report


def agmon_reference(n: int) -> SamplerSpec:
    if n not in AGMON_REFERENCE_DIMS:
        raise ParameterError(f"no Agmon reference grid for n={n}")
    return SamplerSpec(n=n, dims=AGMON_REFERENCE_DIMS[n])


def calibrate_agmon(n: int, trials: int = AGMON_REFERENCE_TRIALS) -> float:
    """Accepted Agmon ratio for trajectories, from the reference sampler

    The sampled maximum of |f|_inf / (|f|_2^(1/(n+1)) |f|_{H^((n+1)/2)}^(n/(n+1)))
    is halved to match the factor 2 in agmon_ratio, then widened by AGMON_SLACK.
    """
    report = verify_ratio("AGMON", agmon_reference(n), trials=trials, refine_grid=False)
    return AGMON_SLACK * report.max_ratio / 2.0


def _read_calibrations(path: Path) -> Dict[str, float]:
    if not path.exists():
        return {}
    try:
        stored = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"calibration file {path} is not valid JSON: {e}") from e
    if not isinstance(stored, dict):
        raise DataError(f"calibration file {path} must hold an object")
    return stored


def stored_agmon_calibration(n: int, path: Optional[PathLike] = None) -> float:
    """Stored Agmon calibration for n, computed from the reference sampler on first use"""
    path = Path(path if path is not None else settings.CALIBRATION_FILE)
    stored = _read_calibrations(path)
    key = f"agmon_n{n}"
    if key not in stored:
        stored[key] = calibrate_agmon(n)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(stored, indent=2, sort_keys=True) + "\n")
        logger.info(f"stored Agmon calibration {stored[key]:.6g} for n={n} in {path}")
    return float(stored[key])


# ---------------------------------------------------------------------------
# Trajectory checks
# ---------------------------------------------------------------------------

def _require_rows(trajectory: Trajectory, what: str):
    if not trajectory.rows:
        raise DataError(f"trajectory {trajectory.run_id} has no samples for {what}")


def _cumulative_trapezoid(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values, dtype=float)
    if values.size > 1:
        out[1:] = np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(times))
    return out


def _ledger_defects(energies: np.ndarray, ledger: np.ndarray) -> np.ndarray:
    scale = energies[0] if energies[0] > 0 else 1.0
    return np.abs(energies + ledger - energies[0]) / scale


def check_energy_identity(trajectory: Trajectory, refined: Optional[Trajectory] = None,
                          tolerance: float = 1e-4) -> LedgerReport:
    """E_eps(u(t)) + alpha int_0^t |du/dt|^2 = E_eps(u0), relative defect sup over samples

    lambda, eps and nu are those the trajectory was run with. With a refined
    (dt/2) trajectory the convergence order is estimated from the two defects.
    """
    _require_rows(trajectory, "the energy ledger")
    if len(trajectory.rhs_sq) != len(trajectory.rows):
        raise DataError(f"trajectory {trajectory.run_id} has no dissipation ledger")
    defects = _ledger_defects(trajectory.column("E_eps"), trajectory.column("dissipation"))
    report = LedgerReport(
        trajectory_id=trajectory.run_id,
        alpha=trajectory.params.dissipation_coefficient,
        defect=float(np.max(defects)),
        defect_series=defects.tolist(),
    )
    if refined is not None:
        fine = check_energy_identity(refined, tolerance=tolerance)
        if fine.defect > 0 and report.defect > 0:
            report.order = float(np.log2(report.defect / fine.defect))
    report.status = CheckStatus.PASS if report.defect <= tolerance else CheckStatus.FAIL
    logger.info(f"[{trajectory.run_id}] energy ledger defect {report.defect:.3e} "
                f"(alpha={report.alpha:.4g})")
    return report


def finite_difference_ledger(trajectory: Trajectory, tolerance: float = 1e-2) -> LedgerReport:
    """Energy ledger with du/dt from differences of the stored sample states"""
    if len(trajectory.states) < 2:
        raise DataError(f"trajectory {trajectory.run_id} kept no states (run with keep_states)")
    times = np.array([t for t, _ in trajectory.states])
    values = np.stack([u.values for _, u in trajectory.states])
    rates = np.gradient(values, times, axis=0, edge_order=2 if len(times) > 2 else 1)
    cell = trajectory.grid.cell_volume
    rate_sq = np.array([np.sum(r ** 2) * cell for r in rates])
    ledger = trajectory.params.dissipation_coefficient * _cumulative_trapezoid(rate_sq, times)
    defects = _ledger_defects(trajectory.column("E_eps"), ledger)
    defect = float(np.max(defects))
    return LedgerReport(
        trajectory_id=f"{trajectory.run_id}-fd",
        alpha=trajectory.params.dissipation_coefficient,
        defect=defect,
        defect_series=defects.tolist(),
        status=CheckStatus.PASS if defect <= tolerance else CheckStatus.FAIL,
    )


def _initial_data_size(trajectory: Trajectory) -> float:
    return trajectory.rows[0].seminorm(trajectory.grid.n / 2.0)


def check_monotone_estimates(trajectory: Trajectory, k: int, tolerance: float = 1e-6,
                             small_data: float = 0.5) -> CheckReport:
    """|u(t)|^2_{H^(k/2)} + r int_0^t (eps |u|^2_{H^(k/2+nu)} + |u|^2_{H^((k+1)/2)}) <= |u0|^2_{H^(k/2)}

    Checked at every sample. A violation with |u0|_{H^(n/2)} above small_data
    is reported as outside the small-data hypothesis rather than a failure.
    """
    n = trajectory.grid.n
    if not 1 <= k <= n + 1:
        raise ParameterError(f"k must lie in 1..{n + 1}, got {k}")
    _require_rows(trajectory, "monotone estimates")
    params = trajectory.params
    nu = params.regularizer_order(n)
    s, s_up, s_eps = k / 2.0, (k + 1) / 2.0, k / 2.0 + nu
    try:
        sup_side = trajectory.seminorm_series(s) ** 2
        integrand = trajectory.seminorm_series(s_up) ** 2
        if params.effective_eps > 0:
            integrand = integrand + params.effective_eps * trajectory.seminorm_series(s_eps) ** 2
    except KeyError as e:
        raise DataError(f"seminorm H^{e.args[0]:g} was not sampled") from e

    times = trajectory.times
    integral = params.damping_rate * _cumulative_trapezoid(integrand, times)
    bound = sup_side[0]
    slack = bound * (1 + tolerance) - (sup_side + integral)
    violations = np.nonzero(slack < 0)[0]
    values = {
        "k": k,
        "initial": float(bound),
        "sup_side": float(np.max(sup_side)),
        "integral_side": float(integral[-1]),
        "min_slack": float(np.min(slack)),
    }
    if violations.size == 0:
        return CheckReport(f"monotone_k{k}", CheckStatus.PASS, values)

    first = float(times[violations[0]])
    size = _initial_data_size(trajectory)
    if size > small_data:
        logger.warning(f"[{trajectory.run_id}] k={k} estimate violated at t={first:.4g}, "
                       f"|u0|_H^(n/2)={size:.3g} is outside the small-data regime")
        return CheckReport(f"monotone_k{k}", CheckStatus.OUTSIDE_HYPOTHESIS, values,
                           message=f"|u0|_H^(n/2)={size:.3g} > {small_data:g}",
                           first_violation_t=first)
    return CheckReport(f"monotone_k{k}", CheckStatus.FAIL, values,
                       message="small-data estimate violated", first_violation_t=first)


def _gronwall_rate(distance_sq: np.ndarray, times: np.ndarray) -> float:
    """Smallest c >= 0 with d(t) <= exp(c t) d(0) at every sample"""
    if distance_sq[0] <= 0 or times.size < 2:
        return 0.0
    mask = times > 0
    with np.errstate(divide="ignore"):
        rates = np.log(np.maximum(distance_sq[mask], np.finfo(float).tiny) / distance_sq[0]) / times[mask]
    return float(max(0.0, np.max(rates)))


def check_L2_growth(trajectory: Trajectory, bound: float = 10.0) -> CheckReport:
    """Gronwall rate of |u - Q|^2_{H^(n/2)} and, for n >= 2, the global L^2 bound"""
    _require_rows(trajectory, "the L^2 growth check")
    n = trajectory.grid.n
    times = trajectory.times
    dist_sq = trajectory.column("dist_L2") ** 2
    try:
        h_sq = dist_sq + trajectory.seminorm_series(n / 2.0) ** 2
    except KeyError as e:
        raise DataError(f"seminorm H^{n / 2:g} was not sampled") from e
    values: Dict[str, Any] = {"gronwall_rate": _gronwall_rate(h_sq, times)}
    status = CheckStatus.PASS
    if n >= 2:
        c = float(np.max(dist_sq) / dist_sq[0]) if dist_sq[0] > 0 else 0.0
        values["l2_constant"] = c
        if not c < bound:
            status = CheckStatus.FAIL
    if not np.isfinite(values["gronwall_rate"]):
        status = CheckStatus.FAIL
    return CheckReport("l2_growth", status, values)


def agmon_ratio(dist_inf: float, dist_l2: float, grad: float, n: int) -> Optional[float]:
    """|u-Q|_inf / (2 |u-Q|_2^(1/(n+1)) |grad u|_{H^((n-1)/2)}^(n/(n+1)))"""
    denominator = 2.0 * dist_l2 ** (1.0 / (n + 1)) * grad ** (n / (n + 1.0))
    if denominator < DEGENERATE_RHS:
        return None
    return dist_inf / denominator


def oscillation_agmon_ratio(u: NodalField) -> Optional[float]:
    """agmon_ratio for u minus its spatial mean, the form that holds on the torus"""
    axes = tuple(range(1, u.values.ndim))
    w = NodalField(u.grid, u.values - u.values.mean(axis=axes, keepdims=True))
    n = u.grid.n
    return agmon_ratio(lp_norm(w, np.inf), lp_norm(w, 2), sobolev_seminorm(w, (n + 1) / 2.0), n)


def check_decay(trajectory: Trajectory, t0: Optional[float] = None, threshold: float = 1e-3,
                tolerance: float = 1e-8, agmon_calibration: Optional[float] = None) -> CheckReport:
    """Decay of |grad u|_{H^((n-1)/2)}, the averaged multiplier bound, and Agmon along the run

    With stored states the Agmon ratio is taken about the spatial mean, so the
    constant offset of the limit map does not count; otherwise it uses the
    dist_Linf and dist_L2 diagnostics relative to Q.

    Without agmon_calibration, HALFFLOW_AGMON_CALIBRATION applies if set and the
    stored reference calibration for n otherwise.
    """
    _require_rows(trajectory, "the decay check")
    n = trajectory.grid.n
    if agmon_calibration is None:
        agmon_calibration = settings.AGMON_CALIBRATION
    if agmon_calibration is None:
        agmon_calibration = stored_agmon_calibration(n)
    times = trajectory.times
    grad = trajectory.column("grad_seminorm")
    start = 0 if t0 is None else int(np.searchsorted(times, t0))
    start = min(start, len(times) - 1)
    g0, gT = grad[start], grad[-1]

    window = times[-1] - times[start]
    grad_sq = grad[start:] ** 2
    average = (_cumulative_trapezoid(grad_sq, times[start:])[-1] / window) if window > 0 else grad_sq[0]
    averaged_ok = gT ** 2 - g0 ** 2 <= average + tolerance

    if trajectory.states:
        ratios = [oscillation_agmon_ratio(u) for _, u in trajectory.states]
    else:
        ratios = [agmon_ratio(r.dist_Linf, r.dist_L2, r.grad_seminorm, n) for r in trajectory.rows]
    ratios = [r for r in ratios if r is not None]
    agmon_max = max(ratios) if ratios else 0.0

    values = {
        "t0": float(times[start]),
        "grad_initial": float(g0),
        "grad_final": float(gT),
        "decay_ratio": float(gT / g0) if g0 > 0 else 0.0,
        "averaged_bound_holds": bool(averaged_ok),
        "agmon_max_ratio": float(agmon_max),
        "agmon_from_states": bool(trajectory.states),
        "dist_Linf_final": float(trajectory.rows[-1].dist_Linf),
    }
    if not averaged_ok:
        return CheckReport("decay", CheckStatus.FAIL, values, message="averaged multiplier bound violated")
    if agmon_calibration is not None and agmon_max > agmon_calibration:
        return CheckReport("decay", CheckStatus.FAIL, values,
                           message=f"Agmon ratio {agmon_max:.4g} exceeds calibration {agmon_calibration:g}")
    if g0 > 0 and gT > threshold * g0:
        logger.warning(f"[{trajectory.run_id}] gradient decayed only to {gT / g0:.3g} of its "
                       f"initial value by t={times[-1]:.4g}")
        return CheckReport("decay", CheckStatus.INCONCLUSIVE, values,
                           message="horizon too short for the decay threshold")
    return CheckReport("decay", CheckStatus.PASS, values)


def perturb(u0: SphereField, delta0: float, kmax: int = 2, seed: int = 0) -> SphereField:
    """u0 + delta0 tau renormalized, tau tangent with unit L^2 norm; u0 itself at delta0 = 0"""
    if delta0 < 0:
        raise ParameterError(f"perturbation size must be ≥ 0, got {delta0}")
    if delta0 == 0:
        return u0
    tau = random_tangent_field(u0, kmax, seed)
    v0, _ = renormalize(NodalField(u0.grid, u0.values + delta0 * tau.values), u0.base_point)
    return v0


def state_differences(a: Trajectory, b: Trajectory) -> Tuple[np.ndarray, np.ndarray]:
    """Sample times and |u_a(t) - u_b(t)|_{L^2} over the stored states"""
    if not a.states or not b.states:
        raise DataError("state differences need trajectories run with keep_states")
    times, diffs = [], []
    for (ta, ua), (tb, ub) in zip(a.states, b.states):
        if abs(ta - tb) > 1e-12 * max(1.0, abs(ta)):
            raise DataError(f"sample times differ: {ta} vs {tb}")
        times.append(ta)
        diffs.append(lp_norm(NodalField(ua.grid, ua.values - ub.values), 2))
    return np.array(times), np.array(diffs)


def sobolev_distance(u: NodalField, v: NodalField, s: float) -> float:
    """Inhomogeneous |u - v|_{H^s}"""
    w = NodalField(u.grid, u.values - v.values)
    return float(np.hypot(lp_norm(w, 2), sobolev_seminorm(w, s)))


def _envelope_rate(times: np.ndarray, diffs: np.ndarray) -> float:
    return _gronwall_rate(diffs ** 2, times) / 2.0


def fit_envelope(times: np.ndarray, diffs: np.ndarray,
                 fit_fraction: float = ENVELOPE_FIT_FRACTION) -> Tuple[float, float]:
    """Exponential envelope d(0) exp(c t) fitted on the early samples

    c is the smallest rate bounding the first fit_fraction of the samples. Returns c
    and the largest d(t) / (d(0) exp(c t)) over the later, held-out samples.
    """
    times, diffs = np.asarray(times, dtype=float), np.asarray(diffs, dtype=float)
    if not 0 < fit_fraction < 1:
        raise ParameterError(f"fit fraction must lie in (0, 1), got {fit_fraction}")
    if diffs.size == 0 or diffs[0] <= 0:
        raise DataError("envelope needs a non-zero initial difference")
    split = max(2, int(np.ceil(fit_fraction * times.size)))
    if split >= times.size:
        raise DataError(f"{times.size} samples are too few to fit and hold out an envelope")
    c = _envelope_rate(times[:split], diffs[:split])
    held = slice(split, None)
    ratio = float(np.max(diffs[held] / (diffs[0] * np.exp(c * (times[held] - times[0])))))
    return c, ratio


def check_stability(u0: SphereField, delta0: float, params: SimParams, seed: int = 0,
                    kmax: int = 2, refine_dt: bool = True, stability: float = 0.2,
                    margin: float = ENVELOPE_MARGIN) -> CheckReport:
    """Two trajectories from u0 and a delta0-perturbation; exponential envelope of their distance

    The envelope rate comes from the first part of the run and must bound the rest
    within margin; with refine_dt the rate must also persist at dt/2.
    """
    v0 = perturb(u0, delta0, kmax, seed)
    a = run(u0, params, keep_states=True)
    b = run(v0, params, keep_states=True)
    times, diffs = state_differences(a, b)

    if delta0 == 0:
        identical = all(np.array_equal(ua.values, ub.values) for (_, ua), (_, ub) in zip(a.states, b.states))
        status = CheckStatus.PASS if identical else CheckStatus.FAIL
        return CheckReport("stability", status, {"delta0": 0.0, "max_difference": float(np.max(diffs)),
                                                 "bitwise_identical": identical})

    c, held_out = fit_envelope(times, diffs)
    within = held_out <= margin
    values = {
        "delta0": delta0,
        "initial_difference": float(diffs[0]),
        "sup_ratio": float(np.max(diffs) / delta0),
        "rate": c,
        "held_out_ratio": held_out,
        "within_envelope": within,
    }
    status = CheckStatus.PASS if within else CheckStatus.FAIL
    if refine_dt:
        half = params.replace(dt=params.dt / 2, sample_every=params.sample_every * 2)
        ah = run(u0, half, keep_states=True)
        bh = run(v0, half, keep_states=True)
        c_half, _ = fit_envelope(*state_differences(ah, bh))
        scale = max(abs(c), abs(c_half))
        variation = abs(c - c_half) / scale if scale > 1e-6 else 0.0
        values.update({"rate_half_dt": c_half, "rate_variation": variation})
        if variation > stability:
            status = CheckStatus.FAIL
    logger.info(f"stability delta0={delta0:g}: rate {c:.4g}, held-out ratio {held_out:.4g}, "
                f"sup |w|/delta0 {values['sup_ratio']:.4g}")
    return CheckReport("stability", status, values)


TRAJECTORY_CHECKS: Dict[str, Callable[[Trajectory], List[Any]]] = {
    "energy_identity": lambda tr: [check_energy_identity(tr)],
    "monotone": lambda tr: [check_monotone_estimates(tr, k) for k in range(1, tr.grid.n + 2)],
    "l2_growth": lambda tr: [check_L2_growth(tr, bound=settings.SOBOLEV_CALIBRATION)],
    "decay": lambda tr: [check_decay(tr)],
}


def apply_checks(trajectory: Trajectory, names: Sequence[str]) -> List[Any]:
    """Run the named trajectory checks in order"""
    reports: List[Any] = []
    for name in names:
        if name not in TRAJECTORY_CHECKS:
            raise ParameterError(f"unknown check {name!r}; choose from {', '.join(TRAJECTORY_CHECKS)}")
        reports.extend(TRAJECTORY_CHECKS[name](trajectory))
    return reports


def worst_status(reports: Sequence[Any]) -> CheckStatus:
    """FAIL over INCONCLUSIVE over OUTSIDE_HYPOTHESIS over PASS"""
    order = [CheckStatus.FAIL, CheckStatus.INCONCLUSIVE, CheckStatus.OUTSIDE_HYPOTHESIS]
    statuses = {r.status for r in reports}
    for status in order:
        if status in statuses:
            return status
    return CheckStatus.PASS
