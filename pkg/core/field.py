"""
Sphere-valued nodal fields, the pointwise algebra Pi_u / Omega_u, constraint
maintenance and initial-data generators
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union
import logging

import numpy as np

from .errors import ConstraintCollapseError, ParameterError, StructuralError, UnsupportedTargetError
from .spectral import (
    DealiasPolicy,
    NodalField,
    SpectralGrid,
    band_mask,
    forward_transform,
    inverse_transform,
    spectral_seminorm,
    FourierField,
)

logger = logging.getLogger(__name__)

# |u| below this at any node means the integrator failed
COLLAPSE_THRESHOLD = 0.5


def default_base_point(components: int) -> np.ndarray:
    """e_(m+1), the last basis vector"""
    q = np.zeros(components)
    q[-1] = 1.0
    return q


@dataclass(frozen=True, eq=False)
class SphereField(NodalField):
    """Map from the grid to S^m in R^(m+1), with base point Q (u -> Q far away)"""
    base_point: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        super().__post_init__()
        if self.components < 2:
            raise StructuralError("sphere-valued fields need at least two components")
        q = default_base_point(self.components) if self.base_point is None else self.base_point
        q = np.asarray(q, dtype=float)
        if q.shape != (self.components,):
            raise StructuralError(f"base point must have {self.components} components, got {q.shape}")
        if abs(np.linalg.norm(q) - 1.0) > 1e-12:
            raise ParameterError(f"base point must be a unit vector, |Q|={np.linalg.norm(q):.6g}")
        object.__setattr__(self, "base_point", q)

    @property
    def target_dim(self) -> int:
        return self.components - 1

    def constraint_drift(self) -> float:
        """max_x ||u(x)| - 1|"""
        return float(np.max(np.abs(np.linalg.norm(self.values, axis=0) - 1.0)))

    def difference_from_base(self) -> NodalField:
        """u - Q as a plain vector field"""
        shape = (self.components,) + (1,) * self.grid.n
        return NodalField(self.grid, self.values - self.base_point.reshape(shape))

    def with_values(self, values: np.ndarray) -> "SphereField":
        return SphereField(self.grid, values, self.base_point)


def constant_field(grid: SpectralGrid, q: Sequence[float]) -> SphereField:
    """u(x) = Q everywhere"""
    q = np.asarray(q, dtype=float)
    values = np.broadcast_to(q.reshape((-1,) + (1,) * grid.n), (q.size,) + grid.shape).copy()
    return SphereField(grid, values, q)


def _same_layout(a: NodalField, b: NodalField):
    if a.grid != b.grid:
        raise StructuralError(f"grid mismatch: {a.grid.dims} vs {b.grid.dims}")
    if a.components != b.components:
        raise StructuralError(f"component mismatch: {a.components} vs {b.components}")


def dot(a: NodalField, b: NodalField) -> NodalField:
    """Pointwise inner product, a scalar field"""
    _same_layout(a, b)
    return NodalField(a.grid, np.sum(a.values * b.values, axis=0))


def cross(a: NodalField, b: NodalField) -> NodalField:
    """Pointwise vector product a x b (Omega_a b); three components only"""
    for f in (a, b):
        if f.components != 3:
            raise UnsupportedTargetError(f.components - 1, "cross product")
    _same_layout(a, b)
    return NodalField(a.grid, np.cross(a.values, b.values, axis=0))


def project_normal(u: NodalField, xi: NodalField) -> NodalField:
    """Pi_u xi = (u . xi) u"""
    _same_layout(u, xi)
    return NodalField(u.grid, np.sum(u.values * xi.values, axis=0) * u.values)


def project_tangent(u: NodalField, xi: NodalField) -> NodalField:
    """(1 - Pi_u) xi"""
    return NodalField(u.grid, xi.values - project_normal(u, xi).values)


def rotate(u: NodalField, rotation: np.ndarray) -> NodalField:
    """Apply one fixed matrix to the value at every node"""
    rotation = np.asarray(rotation, dtype=float)
    values = np.tensordot(rotation, u.values, axes=(1, 0))
    if isinstance(u, SphereField):
        return SphereField(u.grid, values, rotation @ u.base_point)
    return NodalField(u.grid, values)


def renormalize(v: NodalField, base_point: Optional[np.ndarray] = None,
                t: Optional[float] = None) -> Tuple[SphereField, float]:
    """Project pointwise onto the sphere; returns the field and the drift before projection"""
    norms = np.linalg.norm(v.values, axis=0)
    if not np.all(np.isfinite(norms)):
        bad = np.unravel_index(int(np.argmax(~np.isfinite(norms))), norms.shape)
        raise ConstraintCollapseError(float("nan"), tuple(int(i) for i in bad), t)
    idx = np.unravel_index(int(np.argmin(norms)), norms.shape)
    if norms[idx] < COLLAPSE_THRESHOLD:
        raise ConstraintCollapseError(float(norms[idx]), tuple(int(i) for i in idx), t)
    drift = float(np.max(np.abs(norms - 1.0)))
    if base_point is None and isinstance(v, SphereField):
        base_point = v.base_point
    return SphereField(v.grid, v.values / norms[np.newaxis], base_point), drift


def make_great_circle(grid: SpectralGrid, theta: Union[NodalField, np.ndarray]) -> SphereField:
    """Equator map u = (cos theta, sin theta, 0) with base point (1, 0, 0)"""
    theta = theta.values[0] if isinstance(theta, NodalField) else np.asarray(theta, dtype=float)
    if theta.shape != grid.shape:
        raise StructuralError(f"profile shape {theta.shape} does not match grid {grid.shape}")
    values = np.stack([np.cos(theta), np.sin(theta), np.zeros_like(theta)])
    return SphereField(grid, values, np.array([1.0, 0.0, 0.0]))


def winding_number(u: NodalField, axis: int = 0) -> int:
    """Degree of an equator map along one axis (first line of nodes)"""
    index = [0] * u.grid.n
    index[axis] = slice(None)
    angle = np.arctan2(u.values[1][tuple(index)], u.values[0][tuple(index)])
    steps = np.diff(np.concatenate([angle, angle[:1]]))
    steps = (steps + np.pi) % (2 * np.pi) - np.pi
    return int(np.rint(np.sum(steps) / (2 * np.pi)))


def band_limited_noise(grid: SpectralGrid, components: int, kmax: int,
                       rng: np.random.Generator) -> NodalField:
    """Gaussian noise restricted to non-zero modes with |k_j| <= kmax"""
    noise = NodalField(grid, rng.standard_normal((components,) + grid.shape))
    coeffs = forward_transform(noise).coeffs * band_mask(grid, kmax)[np.newaxis]
    return inverse_transform(FourierField(grid, coeffs))


def _check_band(grid: SpectralGrid, kmax: int, policy: DealiasPolicy):
    if kmax < 1:
        raise ParameterError(f"band limit must be >= 1, got {kmax}")
    for d in grid.dims:
        if kmax >= d / (2.0 * policy.padding_factor):
            raise ParameterError(
                f"band limit {kmax} is not below the {policy.value} dealias cutoff for {d} modes"
            )


def make_perturbation(grid: SpectralGrid, base_point: Sequence[float], amplitude: float,
                      kmax: int, seed: int,
                      policy: DealiasPolicy = DealiasPolicy.CUBIC) -> Tuple[SphereField, float]:
    """Q plus tangent band-limited noise of RMS size amplitude, renormalized

    Returns the field and its H^(n/2) seminorm.
    """
    if amplitude < 0:
        raise ParameterError(f"amplitude must be >= 0, got {amplitude}")
    _check_band(grid, kmax, policy)
    q = np.asarray(base_point, dtype=float)
    q = q / np.linalg.norm(q)
    base = constant_field(grid, q)
    if amplitude == 0:
        return base, 0.0

    rng = np.random.default_rng(seed)
    noise = band_limited_noise(grid, q.size, kmax, rng)
    tangent = project_tangent(base, noise).values
    rms = np.sqrt(np.mean(np.sum(tangent ** 2, axis=0)))
    if rms == 0:
        return base, 0.0
    u, _ = renormalize(NodalField(grid, base.values + (amplitude / rms) * tangent), q)
    norm = spectral_seminorm(forward_transform(u), grid.n / 2.0)
    logger.debug(f"perturbation a={amplitude} kmax={kmax} seed={seed}: |u|_H^(n/2)={norm:.6g}")
    return u, norm


def random_tangent_field(u: SphereField, kmax: int, seed: int) -> NodalField:
    """Band-limited field tangent to u with unit L^2 norm"""
    rng = np.random.default_rng(seed)
    noise = band_limited_noise(u.grid, u.components, kmax, rng)
    tangent = project_tangent(u, noise).values
    norm = np.sqrt(np.sum(tangent ** 2) * u.grid.cell_volume)
    if norm == 0:
        raise ParameterError("tangent direction vanished; choose another seed or band")
    return NodalField(u.grid, tangent / norm)
