"""
Functionals on nodal fields: homogeneous Sobolev seminorms, L^p and BMO norms,
the half-Dirichlet energy and its regularization, and the commutators
[R_j, b] and [(-Delta)^(1/4), Omega_a].
"""

from typing import Dict, Tuple, Union
import itertools
import logging

import numpy as np

from .errors import ParameterError, StructuralError, UnsupportedTargetError
from .field import SphereField
from .spectral import (
    DealiasPolicy,
    FourierField,
    NodalField,
    dealiased_product,
    forward_transform,
    fractional_laplacian,
    gradient,
    inverse_transform,
    riesz_transform,
    spectral_seminorm,
)

logger = logging.getLogger(__name__)

Field = Union[NodalField, FourierField]


def _spectral(f: Field) -> FourierField:
    return f if isinstance(f, FourierField) else forward_transform(f)


def _nodal(f: Field) -> NodalField:
    return f if isinstance(f, NodalField) else inverse_transform(f)


def sobolev_seminorm(f: Field, s: float) -> float:
    """||f||_{H^s-dot} = ||(-Delta)^(s/2) f||_{L^2}, zero mode excluded"""
    return spectral_seminorm(_spectral(f), s)


def sobolev_norm(f: Field, s: float) -> float:
    """Inhomogeneous ||f||_{H^s}, (||f||_{L^2}^2 + ||f||_{H^s-dot}^2)^(1/2)"""
    return float(np.hypot(lp_norm(_nodal(f), 2), sobolev_seminorm(f, s)))


def lp_norm(f: Field, p: float) -> float:
    """Nodal-quadrature L^p norm of the pointwise Euclidean length"""
    if p < 1:
        raise ParameterError(f"L^p exponent must be >= 1, got p={p}")
    f = _nodal(f)
    magnitude = np.sqrt(np.sum(f.values ** 2, axis=0))
    if np.isinf(p):
        return float(np.max(magnitude))
    return float((np.sum(magnitude ** p) * f.grid.cell_volume) ** (1.0 / p))


def gradient_nodal(f: Field) -> np.ndarray:
    """Spectral derivatives as an array of shape (n, c, *dims)"""
    grads = gradient(_spectral(f))
    return np.stack([inverse_transform(g).values for g in grads])


def gradient_lp_norm(f: Field, p: float) -> float:
    """||grad f||_{L^p} with |grad f| the Frobenius length over axes and components"""
    F = _spectral(f)
    g = gradient_nodal(F)
    return lp_norm(NodalField(F.grid, g.reshape((-1,) + F.grid.shape)), p)


def hessian_lp_norm(f: Field, p: float) -> float:
    """||grad grad f||_{L^p}, Frobenius length of the Hessian"""
    F = _spectral(f)
    blocks = [inverse_transform(h).values for g in gradient(F) for h in gradient(g)]
    return lp_norm(NodalField(F.grid, np.concatenate(blocks)), p)


def grad_seminorm(u: Field) -> float:
    """||grad u||_{H^((n-1)/2)-dot}"""
    F = _spectral(u)
    s = (F.grid.n - 1) / 2.0
    return float(np.sqrt(sum(spectral_seminorm(g, s) ** 2 for g in gradient(F))))


def bmo_norm(f: Field) -> float:
    """Mean oscillation maximized over node-aligned cubes of dyadic side

    Levels subdivide the box by 2, 4, ... while every cube keeps at least four nodes
    per side; at each level a cube may start at any node (periodic).
    """
    f = _nodal(f)
    if f.components != 1:
        raise StructuralError(f"BMO norm expects a scalar field, got {f.components} components")
    values = f.values[0]
    grid = f.grid
    best = float(np.mean(np.abs(values - np.mean(values))))
    level = 1
    while all(d % 2 ** level == 0 and d // 2 ** level >= 4 for d in grid.dims):
        sides = [d // 2 ** level for d in grid.dims]
        blocks = [2 ** level] * grid.n
        for shift in itertools.product(*(range(s) for s in sides)):
            rolled = np.roll(values, shift=tuple(-int(s) for s in shift), axis=tuple(range(grid.n)))
            shape = [x for pair in zip(blocks, sides) for x in pair]
            cells = rolled.reshape(shape)
            inner = tuple(range(1, 2 * grid.n, 2))
            means = np.mean(cells, axis=inner, keepdims=True)
            oscillation = np.mean(np.abs(cells - means), axis=inner)
            best = max(best, float(np.max(oscillation)))
        level += 1
    return best


def energy(u: Field) -> float:
    """E(u) = 1/2 ||u||_{H^(1/2)-dot}^2"""
    return 0.5 * sobolev_seminorm(u, 0.5) ** 2


def energy_eps(u: Field, eps: float, nu: int) -> float:
    """E_eps(u) = 1/2 (eps ||grad^nu u||_{L^2}^2 + ||u||_{H^(1/2)-dot}^2)"""
    if nu not in (1, 2):
        raise ParameterError(f"regularizer order must be 1 or 2, got nu={nu}")
    if eps < 0:
        raise ParameterError(f"regularization must be >= 0, got eps={eps}")
    F = _spectral(u)
    reg = eps * sobolev_seminorm(F, float(nu)) ** 2 if eps > 0 else 0.0
    return 0.5 * (reg + sobolev_seminorm(F, 0.5) ** 2)


def _dealiased_product(a: Field, b: Field, policy: DealiasPolicy) -> FourierField:
    return dealiased_product(np.multiply, [_spectral(a), _spectral(b)], policy)


def riesz_commutator(b: NodalField, g: NodalField, j: int,
                     policy: DealiasPolicy = DealiasPolicy.CUBIC) -> NodalField:
    """[R_j, b] g = R_j(b g) - b R_j g for scalar b, g"""
    first = riesz_transform(_dealiased_product(b, g, policy), j)
    second = _dealiased_product(b, riesz_transform(forward_transform(g), j), policy)
    return inverse_transform(first - second)


def commutator_riesz(b: NodalField, f: Field, policy: DealiasPolicy = DealiasPolicy.CUBIC,
                     per_pair: bool = False) -> Union[NodalField, Dict[Tuple[int, int], NodalField]]:
    """Tensorial commutator [R, b] grad f = sum_{j,k} [R_j, b_k] d_j f_k

    A scalar b acts on every component of f. With per_pair the individual
    [R_j, b_k] d_j f_k fields are returned keyed by (j, k).
    """
    F = _spectral(f)
    if b.grid != F.grid:
        raise StructuralError("commutator operands live on different grids")
    if b.components not in (1, F.components):
        raise StructuralError(f"b has {b.components} components, f has {F.components}")
    derivatives = [inverse_transform(g) for g in gradient(F)]
    pairs: Dict[Tuple[int, int], NodalField] = {}
    for j, dj in enumerate(derivatives):
        for k in range(F.components):
            bk = b.component(0 if b.components == 1 else k)
            pairs[(j, k)] = riesz_commutator(bk, dj.component(k), j, policy)
    if per_pair:
        return pairs
    total = np.zeros((1,) + F.grid.shape)
    for key in sorted(pairs):
        total = total + pairs[key].values
    return NodalField(F.grid, total)


def fractional_commutator(a: NodalField, f: NodalField, s: float = 0.25,
                          policy: DealiasPolicy = DealiasPolicy.CUBIC) -> NodalField:
    """[(-Delta)^s, a] f = (-Delta)^s (a f) - a (-Delta)^s f, a scalar"""
    if a.components != 1:
        raise StructuralError("fractional_commutator expects a scalar coefficient")
    first = fractional_laplacian(_dealiased_product(a, f, policy), s)
    second = _dealiased_product(a, fractional_laplacian(forward_transform(f), s), policy)
    return inverse_transform(first - second)


def _cross_values(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.cross(a, b, axis=0)


def commutator_quarter(a: NodalField, f: NodalField,
                       policy: DealiasPolicy = DealiasPolicy.CUBIC) -> NodalField:
    """[(-Delta)^(1/4), Omega_a] f = (-Delta)^(1/4)(a x f) - a x (-Delta)^(1/4) f"""
    if a.components != 3:
        raise UnsupportedTargetError(a.components - 1, "commutator_quarter")
    if f.components != 3:
        raise UnsupportedTargetError(f.components - 1, "commutator_quarter")
    A, F = forward_transform(a), forward_transform(f)
    af = dealiased_product(_cross_values, [A, F], policy)
    second = dealiased_product(_cross_values, [A, fractional_laplacian(F, 0.25)], policy)
    return inverse_transform(fractional_laplacian(af, 0.25) - second)


def distance_from_base(u: SphereField, p: float = 2) -> float:
    """||u - Q||_{L^p}"""
    return lp_norm(u.difference_from_base(), p)
