"""
Periodic spectral grid and Fourier multiplier operators

Transforms use the full complex spectrum with the "forward" normalization, so a
coefficient is the amplitude of its mode: f(x) = sum_k F_k exp(i xi_k . x) with
xi_j = 2 pi k_j / L_j.
"""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple, Union
import logging

import numpy as np
import scipy.fft
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from .errors import ParameterError, StructuralError, SymmetryError

logger = logging.getLogger(__name__)

# Relative size of the imaginary residue tolerated by inverse_transform
SYMMETRY_RTOL = 1e-8


class DealiasPolicy(Enum):
    """Dealiasing policies, named by the degree of nonlinearity they make alias-free"""
    NONE = "none"
    QUADRATIC = "quadratic"
    CUBIC = "cubic"

    @property
    def padding_factor(self) -> float:
        """Padding factor of the equivalent zero-padded product"""
        return {"none": 1.0, "quadratic": 1.5, "cubic": 2.0}[self.value]


class SpectralGrid(BaseModel):
    """Periodic box [0, L_1) x ... x [0, L_n) with dims[j] nodes per axis"""

    model_config = ConfigDict(frozen=True)

    n: int
    dims: Tuple[int, ...]
    box_lengths: Tuple[float, ...]

    @field_validator("n")
    @classmethod
    def validate_dimension(cls, v: int) -> int:
        if v not in (1, 2, 3):
            raise ValueError(f"spatial dimension must be 1, 2 or 3, got {v}")
        return v

    @field_validator("dims")
    @classmethod
    def validate_dims(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        for d in v:
            if d < 4 or d % 2:
                raise ValueError(f"modes per axis must be even and >= 4, got {d}")
        return v

    @field_validator("box_lengths")
    @classmethod
    def validate_lengths(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        for length in v:
            if not np.isfinite(length) or length <= 0:
                raise ValueError(f"box lengths must be positive, got {length}")
        return v

    @model_validator(mode="after")
    def validate_axes(self) -> "SpectralGrid":
        if len(self.dims) != self.n or len(self.box_lengths) != self.n:
            raise ValueError(
                f"need {self.n} dims and box lengths, got {len(self.dims)} and {len(self.box_lengths)}"
            )
        return self

    @classmethod
    def create(cls, n: int, dims: Union[int, Sequence[int]],
               box_lengths: Union[float, Sequence[float]] = 2 * np.pi) -> "SpectralGrid":
        """Build a grid, broadcasting scalar dims/lengths to every axis"""
        if isinstance(dims, (int, np.integer)):
            dims = (int(dims),) * n
        if isinstance(box_lengths, (int, float, np.floating)):
            box_lengths = (float(box_lengths),) * n
        return cls(n=n, dims=tuple(int(d) for d in dims),
                   box_lengths=tuple(float(b) for b in box_lengths))

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.dims)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.dims))

    @property
    def volume(self) -> float:
        return float(np.prod(self.box_lengths))

    @property
    def cell_volume(self) -> float:
        return self.volume / self.num_nodes

    @property
    def axes(self) -> Tuple[int, ...]:
        """Spatial axes of a component-first nodal or spectral array"""
        return tuple(range(1, self.n + 1))

    @property
    def mode_indices(self) -> Tuple[np.ndarray, ...]:
        """Integer wavevector components, broadcastable to the grid shape"""
        return _mode_table(self)[0]

    @property
    def wavevector(self) -> Tuple[np.ndarray, ...]:
        """Physical frequencies xi_j = 2 pi k_j / L_j, broadcastable to the grid shape"""
        return _mode_table(self)[1]

    @property
    def xi_abs(self) -> np.ndarray:
        """|xi| on the full grid shape"""
        return _mode_table(self)[2]

    @property
    def nyquist_masks(self) -> Tuple[np.ndarray, ...]:
        """True where k_j is the Nyquist index of axis j"""
        return _mode_table(self)[3]

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        """Node coordinates as full-shape arrays (ij indexing)"""
        axes = [np.arange(d) * (length / d) for d, length in zip(self.dims, self.box_lengths)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def refined(self, factor: int = 2) -> "SpectralGrid":
        """Same box with factor times as many nodes per axis"""
        return SpectralGrid(n=self.n, dims=tuple(d * factor for d in self.dims),
                            box_lengths=self.box_lengths)

    def padded(self, policy: "DealiasPolicy") -> "SpectralGrid":
        """Grid on which products are formed: padding factor times the nodes, rounded up to even"""
        dims = tuple(2 * int(np.ceil(policy.padding_factor * d / 2)) for d in self.dims)
        return SpectralGrid(n=self.n, dims=dims, box_lengths=self.box_lengths)


@lru_cache(maxsize=64)
def _mode_table(grid: SpectralGrid):
    """Mode bookkeeping, cached per grid"""
    ks, xis, nyq = [], [], []
    for axis, (d, length) in enumerate(zip(grid.dims, grid.box_lengths)):
        shape = [1] * grid.n
        shape[axis] = d
        k = np.rint(scipy.fft.fftfreq(d, 1.0 / d)).astype(np.int64).reshape(shape)
        ks.append(k)
        xis.append((2 * np.pi / length) * k.astype(float))
        nyq.append(k == -d // 2)
    xi_sq = sum(np.broadcast_to(x, grid.shape) ** 2 for x in xis)
    xi_abs = np.sqrt(xi_sq)
    for arr in (*ks, *xis, *nyq, xi_abs):
        arr.setflags(write=False)
    return tuple(ks), tuple(xis), xi_abs, tuple(nyq)


@dataclass(frozen=True, eq=False)
class NodalField:
    """Real field sampled on the grid nodes, components first: shape (c, *dims)"""
    grid: SpectralGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape == self.grid.shape:
            values = values[np.newaxis]
        if values.ndim != self.grid.n + 1 or values.shape[1:] != self.grid.shape:
            raise StructuralError(
                f"field shape {values.shape} does not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "values", values)

    @property
    def components(self) -> int:
        return self.values.shape[0]

    def component(self, i: int) -> "NodalField":
        return NodalField(self.grid, self.values[i:i + 1])


@dataclass(frozen=True, eq=False)
class FourierField:
    """Complex mode amplitudes per component: shape (c, *dims)"""
    grid: SpectralGrid
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.shape == self.grid.shape:
            coeffs = coeffs[np.newaxis]
        if coeffs.ndim != self.grid.n + 1 or coeffs.shape[1:] != self.grid.shape:
            raise StructuralError(
                f"coefficient shape {coeffs.shape} does not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def components(self) -> int:
        return self.coeffs.shape[0]

    def __add__(self, other: "FourierField") -> "FourierField":
        _require_same_grid(self.grid, other.grid)
        return FourierField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "FourierField") -> "FourierField":
        _require_same_grid(self.grid, other.grid)
        return FourierField(self.grid, self.coeffs - other.coeffs)

    def scale(self, a: complex) -> "FourierField":
        return FourierField(self.grid, a * self.coeffs)


def _require_same_grid(a: SpectralGrid, b: SpectralGrid):
    if a != b:
        raise StructuralError(f"grid mismatch: {a.dims} vs {b.dims}")


def forward_transform(f: NodalField) -> FourierField:
    """Nodal values -> mode amplitudes (forward transform divides by node count)"""
    if not np.isrealobj(f.values):
        raise StructuralError("forward_transform expects a real nodal field")
    coeffs = scipy.fft.fftn(f.values, axes=f.grid.axes, norm="forward")
    return FourierField(f.grid, coeffs)


def inverse_transform(F: FourierField) -> NodalField:
    """Mode amplitudes -> real nodal values; rejects non-Hermitian input"""
    z = scipy.fft.ifftn(F.coeffs, axes=F.grid.axes, norm="forward")
    violation = float(np.max(np.abs(z.imag))) if z.size else 0.0
    scale = float(np.max(np.abs(z))) if z.size else 0.0
    if violation > SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
        raise SymmetryError(hermitian_defect(F))
    return NodalField(F.grid, np.ascontiguousarray(z.real))


def hermitian_defect(F: FourierField) -> float:
    """max_k |F(k) - conj(F(-k))| over all components"""
    axes = F.grid.axes
    reflected = np.roll(np.flip(F.coeffs, axis=axes), shift=1, axis=axes)
    return float(np.max(np.abs(F.coeffs - np.conj(reflected)))) if F.coeffs.size else 0.0


def apply_symbol(F: FourierField, symbol: np.ndarray) -> FourierField:
    """Multiply every component by a (broadcastable) Fourier symbol"""
    return FourierField(F.grid, F.coeffs * symbol[np.newaxis])


def fractional_power_symbol(grid: SpectralGrid, s: float) -> np.ndarray:
    """|xi|^(2s); the zero mode maps to 0"""
    if s <= 0:
        raise ParameterError(f"fractional order must be positive, got s={s}")
    return _power_symbol(grid, float(s))


@lru_cache(maxsize=64)
def _power_symbol(grid: SpectralGrid, s: float) -> np.ndarray:
    symbol = grid.xi_abs ** (2 * s)
    symbol.setflags(write=False)
    return symbol


def fractional_laplacian(F: FourierField, s: float) -> FourierField:
    """(-Delta)^s, multiplier |xi|^(2s)"""
    return apply_symbol(F, fractional_power_symbol(F.grid, s))


def riesz_symbol(grid: SpectralGrid, j: int) -> np.ndarray:
    """-i xi_j / |xi|, zero at the zero mode and at the axis-j Nyquist modes"""
    if not 0 <= j < grid.n:
        raise ParameterError(f"Riesz axis {j} out of range for n={grid.n}")
    return _riesz_symbol(grid, j)


@lru_cache(maxsize=64)
def _riesz_symbol(grid: SpectralGrid, j: int) -> np.ndarray:
    xi_abs = grid.xi_abs
    xi_j = np.broadcast_to(grid.wavevector[j], grid.shape)
    safe = np.where(xi_abs > 0, xi_abs, 1.0)
    symbol = np.where(xi_abs > 0, -1j * xi_j / safe, 0.0)
    symbol = np.where(np.broadcast_to(grid.nyquist_masks[j], grid.shape), 0.0, symbol)
    symbol.setflags(write=False)
    return symbol


def riesz_transform(F: FourierField, j: int) -> FourierField:
    """Riesz transform R_j (the Hilbert transform when n=1)"""
    return apply_symbol(F, riesz_symbol(F.grid, j))


def derivative_symbol(grid: SpectralGrid, j: int) -> np.ndarray:
    """i xi_j with the axis-j Nyquist mode zeroed"""
    return _derivative_symbol(grid, j)


@lru_cache(maxsize=64)
def _derivative_symbol(grid: SpectralGrid, j: int) -> np.ndarray:
    symbol = np.where(grid.nyquist_masks[j], 0.0, 1j * grid.wavevector[j])
    symbol = np.broadcast_to(symbol, grid.shape).copy()
    symbol.setflags(write=False)
    return symbol


def gradient(F: FourierField) -> List[FourierField]:
    """One FourierField per axis, multiplier i xi_j"""
    return [apply_symbol(F, derivative_symbol(F.grid, j)) for j in range(F.grid.n)]


def divergence(G: Sequence[FourierField]) -> FourierField:
    """sum_j d_j G_j for a list of per-axis fields"""
    if not G:
        raise StructuralError("divergence needs one field per axis")
    grid = G[0].grid
    if len(G) != grid.n:
        raise StructuralError(f"divergence needs {grid.n} fields, got {len(G)}")
    total = np.zeros_like(G[0].coeffs)
    for j, g in enumerate(G):
        _require_same_grid(grid, g.grid)
        total = total + g.coeffs * derivative_symbol(grid, j)[np.newaxis]
    return FourierField(grid, total)


def dealias_mask(grid: SpectralGrid, policy: DealiasPolicy) -> Optional[np.ndarray]:
    """Modes kept by the policy: |k_j| < N_j / (2 * padding factor); None keeps all"""
    if policy is DealiasPolicy.NONE:
        return None
    return _dealias_mask(grid, policy)


@lru_cache(maxsize=64)
def _dealias_mask(grid: SpectralGrid, policy: DealiasPolicy) -> np.ndarray:
    mask = np.ones(grid.shape, dtype=bool)
    for k, d in zip(grid.mode_indices, grid.dims):
        mask = mask & (np.abs(k) < d / (2.0 * policy.padding_factor))
    mask.setflags(write=False)
    return mask


def dealias(F: FourierField, policy: DealiasPolicy = DealiasPolicy.CUBIC) -> FourierField:
    """Zero the modes above the policy cutoff"""
    mask = dealias_mask(F.grid, policy)
    if mask is None:
        return F
    return FourierField(F.grid, np.where(mask[np.newaxis], F.coeffs, 0.0))


def band_mask(grid: SpectralGrid, kmax: int) -> np.ndarray:
    """Non-zero modes with |k_j| <= kmax on every axis"""
    mask = np.ones(grid.shape, dtype=bool)
    for k in grid.mode_indices:
        mask = mask & (np.abs(k) <= kmax)
    zero = tuple([0] * grid.n)
    mask[zero] = False
    return mask


def _resample_axis(coeffs: np.ndarray, axis: int, size: int) -> np.ndarray:
    d = coeffs.shape[axis]
    if size == d:
        return coeffs
    shape = list(coeffs.shape)
    shape[axis] = size
    out = np.zeros(shape, dtype=complex)
    half = min(d, size) // 2

    def span(lo, hi):
        idx = [slice(None)] * coeffs.ndim
        idx[axis] = slice(lo, hi)
        return tuple(idx)

    out[span(0, half)] = coeffs[span(0, half)]
    out[span(size - half + 1, size)] = coeffs[span(d - half + 1, d)]
    if size > d:
        # split the source Nyquist mode evenly between +N/2 and -N/2
        nyquist = 0.5 * coeffs[span(half, half + 1)]
        out[span(half, half + 1)] += nyquist
        out[span(size - half, size - half + 1)] += nyquist
    return out


def resample(F: FourierField, grid: SpectralGrid) -> FourierField:
    """Move coefficients onto a grid of the same box by zero-padding or truncation

    Truncation keeps |k_j| < N_j / 2 of the target and leaves its Nyquist modes at zero.
    """
    if grid.box_lengths != F.grid.box_lengths or grid.n != F.grid.n:
        raise StructuralError(f"cannot resample {F.grid.box_lengths} onto {grid.box_lengths}")
    coeffs = F.coeffs
    for axis, size in enumerate(grid.dims, start=1):
        coeffs = _resample_axis(coeffs, axis, size)
    return FourierField(grid, coeffs)


def refine(F: FourierField, factor: int = 2) -> FourierField:
    """Embed the same trigonometric polynomial in a grid with factor times the nodes"""
    return resample(F, F.grid.refined(factor))


def dealiased_product(combine: Callable[..., np.ndarray], inputs: Sequence[FourierField],
                      policy: DealiasPolicy = DealiasPolicy.CUBIC) -> FourierField:
    """Spectrum of a pointwise product of the inputs

    combine receives the nodal value arrays and returns the product array. The inputs are
    zero-padded by the policy's factor before combining and the result is truncated back,
    so cubic (quadratic) products carry no aliasing error on the retained modes.
    """
    grid = inputs[0].grid
    for F in inputs[1:]:
        _require_same_grid(grid, F.grid)
    if policy is DealiasPolicy.NONE:
        values = combine(*(inverse_transform(F).values for F in inputs))
        return forward_transform(NodalField(grid, values))
    fine = grid.padded(policy)
    values = combine(*(inverse_transform(resample(F, fine)).values for F in inputs))
    return resample(forward_transform(NodalField(fine, values)), grid)


def spectral_seminorm(F: FourierField, s: float) -> float:
    """(sum_{k != 0} |xi|^(2s) |F_k|^2 * volume)^(1/2), summed over components"""
    if s < 0:
        raise ParameterError(f"seminorm order must be >= 0, got s={s}")
    weight = F.grid.xi_abs ** (2 * s) if s > 0 else (F.grid.xi_abs > 0).astype(float)
    weight = np.where(F.grid.xi_abs > 0, weight, 0.0)
    total = np.sum(np.abs(F.coeffs) ** 2 * weight[np.newaxis])
    return float(np.sqrt(total * F.grid.volume))
