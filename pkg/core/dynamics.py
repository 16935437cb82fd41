"""
Right-hand sides of the half-harmonic heat flow, the half-wave map and the
(regularized) half-Landau-Lifshitz-Gilbert equation, and their time integration.

All four flows share the form

    du/dt = -r L u + r (u . L u) u + [u x L u]

with L = eps (-Delta)^nu + (-Delta)^(1/2), r the damping rate (lambda, or 1 for
the heat flow) and the bracketed precession term absent for the heat flow.
The linear part -r L is diagonal in Fourier space; ETDRK2 integrates it exactly.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple, Union
import logging
import uuid

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from .errors import DivergenceError, HalfFlowError, ParameterError, UnsupportedTargetError
from .event_handlers import EventContext, EventProcessor
from .field import SphereField, cross, dot, renormalize
from .norms import distance_from_base, energy, energy_eps, grad_seminorm, lp_norm
from .records import DiagnosticsRow, Equation, EventType, Scheme
from .spectral import (
    DealiasPolicy,
    FourierField,
    NodalField,
    SpectralGrid,
    apply_symbol,
    dealiased_product,
    divergence,
    forward_transform,
    fractional_laplacian,
    fractional_power_symbol,
    gradient,
    inverse_transform,
    spectral_seminorm,
)
from .state_machine import RunState, RunStateMachine

logger = logging.getLogger(__name__)

# Contour points for the phi-function means
ETD_CONTOUR_POINTS = 32


class SimParams(BaseModel):
    """Equation selector, model constants and time-stepping controls"""

    model_config = ConfigDict(frozen=True)

    equation: Equation = Equation.HLLG
    damping: float = 1.0
    eps: float = 0.0
    nu: Optional[int] = None
    dt: float = 1e-3
    T: float = 1.0
    scheme: Scheme = Scheme.ETDRK2
    dealias: DealiasPolicy = DealiasPolicy.CUBIC
    renormalize_each_step: bool = True
    sample_every: int = 10
    snapshot_every: int = 0
    seminorm_orders: Optional[Tuple[float, ...]] = None

    @field_validator("damping")
    @classmethod
    def validate_damping(cls, v: float) -> float:
        if not np.isfinite(v) or v < 0:
            raise ValueError("damping must be ≥ 0")
        return v

    @field_validator("eps")
    @classmethod
    def validate_eps(cls, v: float) -> float:
        if not np.isfinite(v) or v < 0:
            raise ValueError("regularization eps must be ≥ 0")
        return v

    @field_validator("nu")
    @classmethod
    def validate_nu(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v not in (1, 2):
            raise ValueError(f"regularizer order nu must be 1 or 2, got {v}")
        return v

    @field_validator("dt", "T")
    @classmethod
    def validate_positive(cls, v: float) -> float:
        if not np.isfinite(v) or v <= 0:
            raise ValueError(f"time step and horizon must be > 0, got {v}")
        return v

    @field_validator("sample_every")
    @classmethod
    def validate_sample_every(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"sample_every must be ≥ 1, got {v}")
        return v

    @field_validator("snapshot_every")
    @classmethod
    def validate_snapshot_every(cls, v: int) -> int:
        if v < 0:
            raise ValueError(f"snapshot_every must be ≥ 0, got {v}")
        return v

    @field_validator("seminorm_orders")
    @classmethod
    def validate_orders(cls, v: Optional[Tuple[float, ...]]) -> Optional[Tuple[float, ...]]:
        if v is None:
            return v
        if any(s < 0 for s in v):
            raise ValueError("seminorm orders must be ≥ 0")
        return tuple(sorted(set(float(s) for s in v)))

    @model_validator(mode="after")
    def validate_equation(self) -> "SimParams":
        eq = self.equation
        if eq is Equation.HWM and (self.damping != 0 or self.eps != 0):
            raise ValueError("HWM requires damping = 0 and eps = 0")
        if eq in (Equation.HLLG, Equation.LLGR) and self.damping <= 0:
            raise ValueError(f"{eq.value} requires damping > 0")
        if eq in (Equation.HLLG, Equation.HHHF) and self.eps != 0:
            raise ValueError(f"eps > 0 is only meaningful for LLGR, got eps={self.eps} with {eq.value}")
        if eq is Equation.LLGR and self.eps <= 0:
            raise ValueError("LLGR requires eps > 0")
        return self

    def replace(self, **updates) -> "SimParams":
        """Validated copy with some fields changed"""
        return SimParams(**{**self.model_dump(), **updates})

    def regularizer_order(self, n: int) -> int:
        """nu if set, otherwise 1 in one dimension and 2 in two and three"""
        if self.nu is not None:
            return self.nu
        return 1 if n == 1 else 2

    @property
    def effective_eps(self) -> float:
        return self.eps if self.equation is Equation.LLGR else 0.0

    @property
    def alpha(self) -> float:
        """alpha = lambda / (1 + lambda^2)"""
        return self.damping / (1.0 + self.damping ** 2)

    @property
    def beta(self) -> Optional[float]:
        """beta = alpha / lambda, undefined (None) at lambda = 0"""
        if self.damping == 0:
            return None
        return self.alpha / self.damping

    @property
    def damping_rate(self) -> float:
        """Coefficient of the linear and projection terms"""
        if self.equation is Equation.HHHF:
            return 1.0
        if self.equation is Equation.HWM:
            return 0.0
        return self.damping

    @property
    def dissipation_coefficient(self) -> float:
        """Weight of the time integral of |du/dt|^2 in the energy identity"""
        if self.equation is Equation.HHHF:
            return 1.0
        if self.equation is Equation.HWM:
            return 0.0
        return self.alpha

    @property
    def hamiltonian(self) -> bool:
        """Whether the precession term u x L u is present"""
        return self.equation is not Equation.HHHF

    @property
    def num_steps(self) -> int:
        return max(1, int(round(self.T / self.dt)))


def default_seminorm_orders(n: int, nu: int) -> Tuple[float, ...]:
    """Every order the monotone estimates need: k/2, (k+1)/2, k/2 + nu for k = 1..n+1"""
    orders = {0.5}
    for k in range(1, n + 2):
        orders.update({k / 2.0, (k + 1) / 2.0, k / 2.0 + nu})
    return tuple(sorted(orders))


def operator_symbol(grid: SpectralGrid, params: SimParams) -> np.ndarray:
    """Symbol of L = eps (-Delta)^nu + (-Delta)^(1/2)"""
    eps = params.effective_eps
    if eps > 0:
        return grid.xi_abs + eps * fractional_power_symbol(grid, params.regularizer_order(grid.n))
    return grid.xi_abs


def linear_symbol(grid: SpectralGrid, params: SimParams) -> np.ndarray:
    """Diagonal linear part -r L of the split right-hand side"""
    return -params.damping_rate * operator_symbol(grid, params)


def _require_s2(u: Union[NodalField, FourierField], operation: str):
    if u.components != 3:
        raise UnsupportedTargetError(u.components - 1, operation)


def _flow_products(rate: float, precession: bool):
    """Nodal r (u . Lu) u + [u x Lu] for dealiased_product"""
    def combine(u: np.ndarray, lu: np.ndarray) -> np.ndarray:
        out = rate * np.sum(u * lu, axis=0) * u if rate else np.zeros_like(u)
        if precession:
            out = out + np.cross(u, lu, axis=0)
        return out
    return combine


def _tangent_hat(u: NodalField, R: FourierField) -> FourierField:
    """Remove the component of R along u, node by node"""
    r = inverse_transform(R).values
    u_sq = np.sum(u.values ** 2, axis=0)
    normal = np.sum(u.values * r, axis=0) / np.where(u_sq > 0, u_sq, 1.0)
    return forward_transform(NodalField(u.grid, r - normal * u.values))


def _assemble_hat(U: FourierField, LU: FourierField, rate: float, precession: bool,
                  policy: DealiasPolicy, u: Optional[NodalField] = None) -> FourierField:
    """Tangent projection of -r L u + r (u . L u) u + [u x L u], products dealiased first"""
    products = dealiased_product(_flow_products(rate, precession), [U, LU], policy)
    u = inverse_transform(U) if u is None else u
    return _tangent_hat(u, products - LU.scale(rate))


def _operator_hat(U: FourierField, params: SimParams) -> FourierField:
    return apply_symbol(U, operator_symbol(U.grid, params))


def _rhs_hat(U: FourierField, params: SimParams, u: Optional[NodalField] = None) -> FourierField:
    if params.hamiltonian:
        _require_s2(U, f"{params.equation.value} precession term")
    return _assemble_hat(U, _operator_hat(U, params), params.damping_rate,
                         params.hamiltonian, params.dealias, u)


def _nonlinear_hat(u: NodalField, params: SimParams, U: Optional[FourierField] = None) -> FourierField:
    """Remainder of the right-hand side once the diagonal part -r L u is split off"""
    U = forward_transform(u) if U is None else U
    return _rhs_hat(U, params, u) - apply_symbol(U, linear_symbol(U.grid, params))


def rhs(u: NodalField, params: SimParams) -> NodalField:
    """Assembled du/dt for the selected equation, tangent to the sphere at every node"""
    return inverse_transform(_rhs_hat(forward_transform(u), params, u))


def rhs_hllg(u: SphereField, damping: float = 1.0,
             policy: DealiasPolicy = DealiasPolicy.CUBIC) -> NodalField:
    """u x (-Delta)^(1/2) u + lambda u x u x (-Delta)^(1/2) u"""
    _require_s2(u, "rhs_hllg")
    U = forward_transform(u)
    return inverse_transform(_assemble_hat(U, fractional_laplacian(U, 0.5), damping, True, policy, u))


def rhs_hhhf(u: SphereField, policy: DealiasPolicy = DealiasPolicy.CUBIC) -> NodalField:
    """-(-Delta)^(1/2) u + Pi_u (-Delta)^(1/2) u, any target sphere"""
    U = forward_transform(u)
    return inverse_transform(_assemble_hat(U, fractional_laplacian(U, 0.5), 1.0, False, policy, u))


def rhs_llgr(u: SphereField, eps: float, nu: int, damping: float,
             policy: DealiasPolicy = DealiasPolicy.CUBIC) -> NodalField:
    """-lambda L u + (lambda Pi_u + Omega_u) L u with L = eps (-Delta)^nu + (-Delta)^(1/2)"""
    if nu not in (1, 2):
        raise ParameterError(f"regularizer order must be 1 or 2, got nu={nu}")
    if eps < 0:
        raise ParameterError(f"regularization must be >= 0, got eps={eps}")
    _require_s2(u, "rhs_llgr")
    U = forward_transform(u)
    LU = fractional_laplacian(U, 0.5)
    if eps > 0:
        LU = LU + fractional_laplacian(U, float(nu)).scale(eps)
    return inverse_transform(_assemble_hat(U, LU, damping, True, policy, u))


def grad_sq(u: NodalField) -> NodalField:
    """|grad u|^2 = sum_j |d_j u|^2"""
    grads = [inverse_transform(g).values for g in gradient(forward_transform(u))]
    return NodalField(u.grid, sum(np.sum(g ** 2, axis=0) for g in grads))


def hessian_sq(u: NodalField) -> NodalField:
    """|grad grad u|^2 = sum_{i,j} |d_i d_j u|^2"""
    total = np.zeros(u.grid.shape)
    for g in gradient(forward_transform(u)):
        for h in gradient(g):
            total += np.sum(inverse_transform(h).values ** 2, axis=0)
    return NodalField(u.grid, total)


def biharmonic_constraint(u: SphereField) -> Tuple[NodalField, NodalField]:
    """Both sides of u . Delta^2 u = -(|Delta u|^2 + 2 |grad grad u|^2 + 4 grad u . grad Delta u)

    The identity holds for unit-length u.
    """
    U = forward_transform(u)
    lap = fractional_laplacian(U, 1.0).scale(-1.0)
    bilap = fractional_laplacian(U, 2.0)
    lhs = dot(u, inverse_transform(bilap))
    lap_nodal = inverse_transform(lap).values
    mixed = np.zeros(u.grid.shape)
    for g, gl in zip(gradient(U), gradient(lap)):
        mixed += np.sum(inverse_transform(g).values * inverse_transform(gl).values, axis=0)
    rhs_values = -(np.sum(lap_nodal ** 2, axis=0) + 2 * hessian_sq(u).values[0] + 4 * mixed)
    return lhs, NodalField(u.grid, rhs_values)


def epsilon_flux_term(u: SphereField, eps: float, nu: int) -> NodalField:
    """eps u x (-Delta)^nu u in divergence form

    nu = 1: -eps div(u x grad u)
    nu = 2: eps [Delta(u x Delta u) - 2 div(grad u x Delta u)]
    """
    _require_s2(u, "epsilon_flux_term")
    U = forward_transform(u)
    grads = [inverse_transform(g) for g in gradient(U)]
    if nu == 1:
        fluxes = [forward_transform(cross(u, g)) for g in grads]
        return inverse_transform(divergence(fluxes).scale(-eps))
    if nu == 2:
        lap = inverse_transform(fractional_laplacian(U, 1.0).scale(-1.0))
        inner = fractional_laplacian(forward_transform(cross(u, lap)), 1.0).scale(-1.0)
        fluxes = [forward_transform(cross(g, lap)) for g in grads]
        return inverse_transform((inner - divergence(fluxes).scale(2.0)).scale(eps))
    raise ParameterError(f"regularizer order must be 1 or 2, got nu={nu}")


def gilbert_residual(u: SphereField, v: NodalField, params: SimParams) -> float:
    """||beta v - u x (alpha v + L u)||_{L^2} with v standing in for du/dt"""
    beta = params.beta
    if beta is None:
        raise ParameterError("Gilbert form needs damping > 0 (beta undefined at lambda = 0)")
    _require_s2(u, "gilbert_residual")
    lu = inverse_transform(apply_symbol(forward_transform(u), operator_symbol(u.grid, params)))
    effective = NodalField(u.grid, params.alpha * v.values + lu.values)
    residual = beta * v.values - cross(u, effective).values
    return lp_norm(NodalField(u.grid, residual), 2)


@lru_cache(maxsize=16)
def etdrk2_coefficients(grid: SpectralGrid, params: SimParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """exp(hL), h phi1(hL), h phi2(hL) by contour means around each distinct hL"""
    h = params.dt
    hl = h * linear_symbol(grid, params)
    values, inverse = np.unique(hl.ravel(), return_inverse=True)
    roots = np.exp(1j * np.pi * (np.arange(ETD_CONTOUR_POINTS) + 0.5) / ETD_CONTOUR_POINTS)
    z = values[:, np.newaxis] + roots[np.newaxis, :]
    phi1 = np.mean((np.exp(z) - 1.0) / z, axis=1).real
    phi2 = np.mean((np.exp(z) - 1.0 - z) / z ** 2, axis=1).real
    coeffs = (np.exp(hl), h * phi1[inverse].reshape(grid.shape), h * phi2[inverse].reshape(grid.shape))
    for c in coeffs:
        c.setflags(write=False)
    return coeffs


def _etdrk2(u: SphereField, params: SimParams) -> FourierField:
    expo, phi1, phi2 = etdrk2_coefficients(u.grid, params)
    U = forward_transform(u)
    n0 = _nonlinear_hat(u, params, U)
    A = FourierField(u.grid, expo[np.newaxis] * U.coeffs + phi1[np.newaxis] * n0.coeffs)
    na = _nonlinear_hat(inverse_transform(A), params, A)
    return FourierField(u.grid, A.coeffs + phi2[np.newaxis] * (na.coeffs - n0.coeffs))


def _rk4(u: SphereField, params: SimParams) -> FourierField:
    h = params.dt
    U = forward_transform(u)
    k1 = _rhs_hat(U, params)
    k2 = _rhs_hat(U + k1.scale(h / 2), params)
    k3 = _rhs_hat(U + k2.scale(h / 2), params)
    k4 = _rhs_hat(U + k3.scale(h), params)
    return U + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(h / 6)


@dataclass
class StepReport:
    t: float
    drift: float


def step(u: SphereField, params: SimParams, t: float = 0.0) -> Tuple[SphereField, StepReport]:
    """Advance one time step; the report carries the drift before renormalization"""
    advance = _etdrk2 if params.scheme is Scheme.ETDRK2 else _rk4
    t_next = t + params.dt
    v = inverse_transform(advance(u, params))
    if not np.all(np.isfinite(v.values)):
        raise DivergenceError(t_next)
    if params.renormalize_each_step:
        new, drift = renormalize(v, u.base_point, t=t_next)
    else:
        new = SphereField(u.grid, v.values, u.base_point)
        drift = new.constraint_drift()
    logger.debug(f"step t={t_next:.6g} drift={drift:.3e}")
    return new, StepReport(t=t_next, drift=drift)


def diagnostics_row(u: SphereField, params: SimParams, t: float, orders: Sequence[float],
                    dissipation: float = 0.0, drift: float = 0.0) -> DiagnosticsRow:
    """Sample every monitored functional of u"""
    U = forward_transform(u)
    eps = params.effective_eps
    e = energy(U)
    e_eps = energy_eps(U, eps, params.regularizer_order(u.grid.n)) if eps > 0 else e
    return DiagnosticsRow(
        t=t,
        E=e,
        E_eps=e_eps,
        seminorms={s: spectral_seminorm(U, s) for s in orders},
        dist_L2=distance_from_base(u, 2),
        dist_Linf=distance_from_base(u, np.inf),
        dissipation=dissipation,
        drift=drift,
        grad_seminorm=grad_seminorm(U),
    )


@dataclass
class Trajectory:
    """Diagnostics (and optionally states) of one run, plus its lifecycle"""
    run_id: str
    params: SimParams
    initial: SphereField
    orders: Tuple[float, ...]
    machine: RunStateMachine
    rows: List[DiagnosticsRow] = field(default_factory=list)
    rhs_sq: List[float] = field(default_factory=list)
    states: List[Tuple[float, SphereField]] = field(default_factory=list)
    final: Optional[SphereField] = None
    t_final: float = 0.0
    error: Optional[HalfFlowError] = None

    @property
    def grid(self) -> SpectralGrid:
        return self.initial.grid

    @property
    def status(self) -> RunState:
        return self.machine.current_state

    @property
    def completed(self) -> bool:
        return self.machine.is_in_state(RunState.COMPLETED)

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.rows])

    def column(self, name: str) -> np.ndarray:
        """One diagnostic as an array over samples"""
        return np.array([getattr(r, name) for r in self.rows])

    def seminorm_series(self, s: float) -> np.ndarray:
        return np.array([r.seminorm(s) for r in self.rows])


def _check_runnable(u0: SphereField, params: SimParams):
    if params.hamiltonian and u0.components != 3:
        raise UnsupportedTargetError(u0.components - 1, f"{params.equation.value} flow")
    if params.regularizer_order(u0.grid.n) not in (1, 2):
        raise ParameterError("regularizer order must be 1 or 2")


def run(u0: SphereField, params: SimParams, sink: Optional[EventProcessor] = None,
        keep_states: bool = False, raise_errors: bool = True,
        run_id: Optional[str] = None) -> Trajectory:
    """Advance u0 to the horizon T, sampling diagnostics every sample_every steps

    The ledger integrates alpha |du/dt|^2 by the trapezoidal rule over samples, with
    du/dt taken from the assembled right-hand side. On a step error the trajectory
    keeps the last good state, moves to FAILED, and the error is re-raised unless
    raise_errors is False.
    """
    run_id = run_id or uuid.uuid4().hex[:8]
    machine = RunStateMachine(run_id)
    processor = sink or EventProcessor()
    orders = params.seminorm_orders or default_seminorm_orders(
        u0.grid.n, params.regularizer_order(u0.grid.n))
    traj = Trajectory(run_id=run_id, params=params, initial=u0, orders=tuple(orders),
                      machine=machine, final=u0)
    coefficient = params.dissipation_coefficient
    steps = params.num_steps
    report_every = max(1, steps // 10)

    try:
        _check_runnable(u0, params)
    except HalfFlowError as e:
        machine.transition_to(RunState.FAILED, str(e))
        traj.error = e
        raise

    machine.transition_to(RunState.READY)
    processor.process_event(EventType.RUN_STARTED, EventContext(run_id), params)
    machine.transition_to(RunState.RUNNING)
    logger.info(f"[{run_id}] {params.equation.value}/{params.scheme.value} n={u0.grid.n} "
                f"dims={u0.grid.dims} dt={params.dt:g} T={params.T:g} steps={steps}")

    u, t = u0, 0.0
    drift_since_sample = u0.constraint_drift()
    dissipation = 0.0
    samples = 0

    def record(i: int):
        nonlocal dissipation, drift_since_sample, samples
        rate = lp_norm(rhs(u, params), 2) ** 2
        if traj.rhs_sq:
            dissipation += coefficient * 0.5 * (traj.rhs_sq[-1] + rate) * (t - traj.rows[-1].t)
        row = diagnostics_row(u, params, t, traj.orders, dissipation, drift_since_sample)
        traj.rows.append(row)
        traj.rhs_sq.append(rate)
        if keep_states:
            traj.states.append((t, u))
        context = EventContext(run_id, t=t, step=i)
        processor.process_event(EventType.SAMPLE_RECORDED, context, row)
        if params.snapshot_every and samples % params.snapshot_every == 0:
            processor.process_event(EventType.SNAPSHOT_DUE, context, u)
        samples += 1
        drift_since_sample = 0.0

    try:
        record(0)
        for i in range(1, steps + 1):
            u, report = step(u, params, t)
            t = i * params.dt
            traj.final, traj.t_final = u, t
            drift_since_sample = max(drift_since_sample, report.drift)
            if i % params.sample_every == 0 or i == steps:
                record(i)
            if i % report_every == 0:
                logger.info(f"[{run_id}] t={t:.4g} E={traj.rows[-1].E:.6g} "
                            f"drift={report.drift:.2e}")
    except HalfFlowError as e:
        traj.error = e
        machine.transition_to(RunState.FAILED, str(e))
        logger.error(f"[{run_id}] run failed at t={t:.6g}: {e}")
        processor.process_event(EventType.RUN_FAILED, EventContext(run_id, t=t), e)
        if raise_errors:
            raise
        return traj

    machine.transition_to(RunState.COMPLETED)
    processor.process_event(EventType.RUN_COMPLETED, EventContext(run_id, t=t, step=steps), traj)
    logger.info(f"[{run_id}] completed: {len(traj.rows)} samples, E(T)={traj.rows[-1].E:.6g}")
    return traj
