"""
Fourier representation of solenoidal, mean-zero vector fields on the periodic box.

Coefficients are stored in the full ``fftn`` layout with shape
``(dim, n, n[, n])`` and normalised so that

    u(x) = sum_k u_hat(k) exp(i k . x),

i.e. ``u_hat = fftn(u) / n**dim``.  With this convention the H-norm is
``sqrt(|Omega| * sum |u_hat|^2)`` and the Stokes operator is the modewise
multiplication by ``|k|^2`` (physical wavenumbers ``2*pi/L * integer``).
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

__all__ = [
    "PhysicalParams",
    "GridSpec",
    "ModeSet",
    "SpectralField",
    "grid_ops",
    "leray_project",
    "stokes_apply",
    "norm",
    "galerkin_truncate",
    "transform",
    "to_physical",
    "to_spectral",
    "random_field",
]

TWO_PI = 2.0 * math.pi


class PhysicalParams(BaseModel):
    """Model constants of the damped Navier-Stokes system.

    ``beta = 0`` and ``gamma = 0`` are accepted here so that the integrator can
    be regression-tested against linear and plain Navier-Stokes dynamics; the
    threshold formulas reject ``beta <= 0`` themselves.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    mu: float = Field(gt=0.0, description="viscosity")
    alpha: float = Field(gt=0.0, description="Darcy coefficient")
    beta: float = Field(ge=0.0, description="Forchheimer coefficient")
    gamma: float = Field(default=0.0, description="pumping (<0) / damping (>0) coefficient")
    r: float = Field(ge=1.0, description="absorption exponent")
    q: float = Field(default=1.0, ge=1.0, description="secondary exponent")
    period_T: float = Field(default=1.0, gt=0.0, description="forcing period")
    dim: int = Field(default=2, description="spatial dimension")
    box_length: float = Field(default=TWO_PI, gt=0.0, description="side of the periodic box")

    @field_validator("dim")
    @classmethod
    def _check_dim(cls, v: int) -> int:
        if v not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {v}")
        return v

    @model_validator(mode="after")
    def _check_exponents(self) -> "PhysicalParams":
        if not self.r > self.q:
            raise ValueError(f"r must exceed q (got r={self.r}, q={self.q})")
        return self

    @property
    def lambda1(self) -> float:
        """First Stokes eigenvalue of the box, ``(2*pi/L)**2``."""
        return (TWO_PI / self.box_length) ** 2

    @property
    def volume(self) -> float:
        return self.box_length**self.dim

    @property
    def omega(self) -> float:
        """Slowest linear decay rate ``mu*lambda1 + alpha``."""
        return self.mu * self.lambda1 + self.alpha


class GridSpec(BaseModel):
    """Collocation grid on the periodic box."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dim: int = 2
    n_per_axis: int = 32
    dealias_fraction: float = Field(default=2.0 / 3.0, gt=0.0, le=1.0)
    box_length: float = Field(default=TWO_PI, gt=0.0)

    @field_validator("dim")
    @classmethod
    def _check_dim(cls, v: int) -> int:
        if v not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {v}")
        return v

    @field_validator("n_per_axis")
    @classmethod
    def _check_n(cls, v: int) -> int:
        if v < 8 or v & (v - 1):
            raise ValueError(f"n_per_axis must be a power of two >= 8, got {v}")
        return v

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_per_axis,) * self.dim

    @property
    def field_shape(self) -> tuple[int, ...]:
        return (self.dim,) + self.shape

    @property
    def volume(self) -> float:
        return self.box_length**self.dim

    @property
    def kmax_retained(self) -> int:
        """Largest integer wavenumber per axis kept by the dealiasing cutoff."""
        kmax = int(math.floor(self.dealias_fraction * self.n_per_axis / 2 + 1e-12))
        return min(kmax, self.n_per_axis // 2 - 1)

    def matches(self, params: PhysicalParams) -> bool:
        return self.dim == params.dim and math.isclose(self.box_length, params.box_length, rel_tol=1e-14)


class _GridOps:
    """Precomputed wavenumber tables for one grid (shared, read-only)."""

    def __init__(self, grid: GridSpec):
        n, d = grid.n_per_axis, grid.dim
        self.grid = grid
        self.n = n
        self.dim = d
        self.axes = tuple(range(-d, 0))
        self.scale = TWO_PI / grid.box_length
        ints = np.fft.fftfreq(n, 1.0 / n).astype(np.int64)
        mesh = np.meshgrid(*([ints] * d), indexing="ij")
        self.kint = np.stack(mesh)  # (d, n, ..., n)
        self.k = self.kint * self.scale
        self.k2int = np.sum(self.kint**2, axis=0)
        self.k2 = self.k2int * self.scale**2
        with np.errstate(divide="ignore"):
            self.inv_k2 = np.where(self.k2int > 0, 1.0 / np.where(self.k2 > 0, self.k2, 1.0), 0.0)
        kmax = grid.kmax_retained
        self.dealias = np.all(np.abs(self.kint) <= kmax, axis=0) & (self.k2int > 0)
        # Nyquist planes have no Hermitian partner; products are cleared there.
        self.no_nyquist = np.all(self.kint != -(n // 2), axis=0)
        for arr in (self.kint, self.k, self.k2int, self.k2, self.inv_k2, self.dealias, self.no_nyquist):
            arr.flags.writeable = False
        self._pad_index: dict[int, tuple[np.ndarray, ...]] = {}

    def pad_index(self, m: int) -> tuple[np.ndarray, ...]:
        """Open-mesh index placing n-grid coefficients into an m-grid array."""
        if m not in self._pad_index:
            if m < self.n or m % 2:
                raise ValueError(f"padded size must be even and >= {self.n}, got {m}")
            freqs = np.fft.fftfreq(self.n, 1.0 / self.n).astype(np.int64)
            pos = np.mod(freqs, m)
            self._pad_index[m] = np.ix_(*([pos] * self.dim))
        return self._pad_index[m]

    def padded_size(self, factor: float) -> int:
        m = int(math.ceil(factor * self.n - 1e-9))
        return m + (m % 2)

    def to_values(self, coeffs: np.ndarray, m: int | None = None) -> np.ndarray:
        """Physical values on the (optionally padded) grid; leading axes are batch axes."""
        m = self.n if m is None else m
        if m == self.n:
            spec = coeffs
        else:
            spec = np.zeros(coeffs.shape[: -self.dim] + (m,) * self.dim, dtype=complex)
            spec[(Ellipsis,) + self.pad_index(m)] = coeffs
        vals = sfft.ifftn(spec, axes=self.axes, norm="forward")
        return vals.real

    def from_values(self, values: np.ndarray, m: int | None = None) -> np.ndarray:
        """Coefficients on the n-grid of values sampled on an m-grid (high modes dropped)."""
        m = values.shape[-1] if m is None else m
        spec = sfft.fftn(values, axes=self.axes, norm="forward")
        if m == self.n:
            return spec
        return spec[(Ellipsis,) + self.pad_index(m)]


@lru_cache(maxsize=32)
def grid_ops(grid: GridSpec) -> _GridOps:
    return _GridOps(grid)


class ModeSet:
    """Galerkin level: the retained wave indices ``0 < |n|^2 <= cutoff``.

    ``cutoff`` is in integer index units; ``None`` keeps every mode the
    dealiasing rule allows.  Retained sets are nested in ``cutoff``.
    """

    def __init__(self, grid: GridSpec, cutoff: int | None = None):
        ops = grid_ops(grid)
        mask = ops.dealias.copy()
        if cutoff is not None:
            if cutoff < 1:
                raise ValueError(f"Galerkin cutoff must be >= 1, got {cutoff}")
            mask &= ops.k2int <= cutoff
        mask.flags.writeable = False
        self.grid = grid
        self.cutoff = cutoff
        self.mask = mask

    @property
    def size(self) -> int:
        """Number of retained wave vectors."""
        return int(self.mask.sum())

    @property
    def wave_indices(self) -> np.ndarray:
        return grid_ops(self.grid).kint[:, self.mask].T

    @property
    def lambda1(self) -> float:
        ops = grid_ops(self.grid)
        return float(ops.k2[self.mask].min())

    @property
    def lambda_max(self) -> float:
        ops = grid_ops(self.grid)
        return float(ops.k2[self.mask].max())

    def contains(self, field: "SpectralField", rtol: float = 0.0) -> bool:
        outside = np.abs(field.coeffs[:, ~self.mask]).max(initial=0.0)
        scale = np.abs(field.coeffs).max(initial=0.0)
        return outside <= rtol * scale

    def __le__(self, other: "ModeSet") -> bool:
        return bool(np.all(other.mask[self.mask]))

    def __repr__(self) -> str:
        return f"ModeSet(cutoff={self.cutoff}, size={self.size})"


class SpectralField:
    """Immutable vector field held as Fourier coefficients.

    Args:
        grid: the collocation grid.
        coeffs: complex array of shape ``grid.field_shape``.
        solenoidal: whether ``k . u_hat(k) = 0`` holds for every mode.
    """

    __slots__ = ("grid", "coeffs", "solenoidal")

    def __init__(self, grid: GridSpec, coeffs: np.ndarray, solenoidal: bool = False):
        coeffs = np.array(coeffs, dtype=np.complex128, copy=True)
        if coeffs.shape != grid.field_shape:
            raise ValueError(f"coefficient shape {coeffs.shape} does not match grid {grid.field_shape}")
        coeffs.flags.writeable = False
        self.grid = grid
        self.coeffs = coeffs
        self.solenoidal = solenoidal

    @classmethod
    def zeros(cls, grid: GridSpec) -> "SpectralField":
        return cls(grid, np.zeros(grid.field_shape, dtype=complex), solenoidal=True)

    @classmethod
    def from_physical(cls, grid: GridSpec, values: np.ndarray) -> "SpectralField":
        return to_spectral(values, grid)

    def to_physical(self) -> np.ndarray:
        return to_physical(self)

    def divergence(self) -> np.ndarray:
        """Modewise ``k . u_hat``."""
        ops = grid_ops(self.grid)
        return np.sum(ops.k * self.coeffs, axis=0)

    def is_hermitian(self, rtol: float = 1e-12) -> bool:
        flipped = np.conj(self.coeffs)
        for ax in range(1, self.grid.dim + 1):
            flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
        scale = np.abs(self.coeffs).max(initial=0.0)
        return float(np.abs(self.coeffs - flipped).max(initial=0.0)) <= rtol * max(scale, 1e-300)

    def _binary(self, other: "SpectralField", sign: float) -> "SpectralField":
        if not isinstance(other, SpectralField):
            return NotImplemented
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")
        return SpectralField(self.grid, self.coeffs + sign * other.coeffs, self.solenoidal and other.solenoidal)

    def __add__(self, other):
        return self._binary(other, 1.0)

    def __sub__(self, other):
        return self._binary(other, -1.0)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * scalar, self.solenoidal)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return self * -1.0

    def __repr__(self) -> str:
        return f"SpectralField(dim={self.grid.dim}, n={self.grid.n_per_axis}, solenoidal={self.solenoidal})"


def to_spectral(values: np.ndarray, grid: GridSpec) -> SpectralField:
    """Forward transform of physical values of shape ``grid.field_shape``."""
    values = np.asarray(values)
    if values.shape != grid.field_shape:
        raise ValueError(f"physical array shape {values.shape} does not match grid {grid.field_shape}")
    ops = grid_ops(grid)
    coeffs = sfft.fftn(values, axes=ops.axes, norm="forward")
    return SpectralField(grid, coeffs, solenoidal=False)


def to_physical(field: SpectralField) -> np.ndarray:
    return grid_ops(field.grid).to_values(field.coeffs)


def transform(u, direction: str, grid: GridSpec | None = None):
    """Switch between physical values and a :class:`SpectralField`.

    ``direction`` is ``"forward"`` (physical -> spectral, needs ``grid``) or
    ``"inverse"`` (spectral -> physical).
    """
    if direction == "forward":
        if grid is None:
            raise ValueError("forward transform needs the grid")
        return to_spectral(u, grid)
    if direction == "inverse":
        if not isinstance(u, SpectralField):
            raise TypeError("inverse transform expects a SpectralField")
        return to_physical(u)
    raise ValueError(f"unknown direction {direction!r}")


def leray_coeffs(coeffs: np.ndarray, ops: _GridOps) -> np.ndarray:
    """Divergence-free part of raw coefficients (leading batch axes allowed)."""
    kdotu = np.sum(ops.k * coeffs, axis=-ops.dim - 1, keepdims=True)
    out = coeffs - ops.k * (kdotu * ops.inv_k2)
    out[(Ellipsis,) + (0,) * ops.dim] = 0.0
    return out


def leray_project(u: SpectralField) -> SpectralField:
    """Orthogonal projection onto divergence-free, mean-zero fields."""
    if not isinstance(u, SpectralField):
        raise TypeError("leray_project expects a SpectralField")
    ops = grid_ops(u.grid)
    return SpectralField(u.grid, leray_coeffs(u.coeffs, ops), solenoidal=True)


def _require_solenoidal(u: SpectralField, what: str) -> None:
    if not u.solenoidal:
        ops = grid_ops(u.grid)
        div = np.abs(np.sum(ops.k * u.coeffs, axis=0)).max(initial=0.0)
        scale = np.abs(u.coeffs).max(initial=0.0) * ops.scale * ops.n
        if div > 1e-12 * max(scale, 1e-300):
            raise ValueError(f"{what} requires a divergence-free field")


def stokes_apply(u: SpectralField) -> SpectralField:
    """Apply ``A = -P Laplacian``, i.e. multiply mode ``k`` by ``|k|^2``."""
    _require_solenoidal(u, "stokes_apply")
    ops = grid_ops(u.grid)
    return SpectralField(u.grid, u.coeffs * ops.k2, solenoidal=True)


def lp_norm_coeffs(coeffs: np.ndarray, ops: _GridOps, p: float, pad: float = 1.0) -> np.ndarray:
    """L^p norm by trapezoidal quadrature on a grid padded by ``pad``."""
    m = ops.padded_size(pad)
    vals = ops.to_values(coeffs, m)
    mag = np.sqrt(np.sum(vals**2, axis=-ops.dim - 1))
    mean = np.mean(mag**p, axis=ops.axes)
    return (ops.grid.volume * mean) ** (1.0 / p)


def norm(u: SpectralField, kind: str = "H", p: float | None = None, pad: float = 1.0) -> float:
    """Norm of a mean-zero field.

    Args:
        u: the field.
        kind: ``"H"`` (L^2), ``"V"`` (gradient L^2), ``"Vprime"`` (dual of V,
            ``sqrt(|Omega| sum |u_k|^2 / lambda_k)``) or ``"Lp"``.
        p: exponent for ``"Lp"``; must be >= 1.
        pad: quadrature grid refinement factor for ``"Lp"``.
    """
    ops = grid_ops(u.grid)
    vol = u.grid.volume
    mag2 = np.sum(np.abs(u.coeffs) ** 2, axis=0)
    if kind == "H":
        return float(math.sqrt(vol * mag2.sum()))
    if kind == "V":
        return float(math.sqrt(vol * np.sum(ops.k2 * mag2)))
    if kind == "Vprime":
        return float(math.sqrt(vol * np.sum(ops.inv_k2 * mag2)))
    if kind == "Lp":
        if p is None or not p >= 1:
            raise ValueError(f"Lp norm needs p >= 1, got {p}")
        return float(lp_norm_coeffs(u.coeffs, ops, p, pad))
    raise ValueError(f"unknown norm kind {kind!r}")


def galerkin_truncate(u: SpectralField, modes: ModeSet) -> SpectralField:
    """Zero every coefficient outside ``modes``."""
    if modes.grid != u.grid:
        raise ValueError("mode set and field live on different grids")
    return SpectralField(u.grid, u.coeffs * modes.mask, solenoidal=u.solenoidal)


def inner(u: SpectralField, v: SpectralField) -> float:
    """L^2 inner product ``(u, v)``."""
    return float(u.grid.volume * np.real(np.vdot(u.coeffs, v.coeffs)))


def random_field(
    grid: GridSpec,
    modes: ModeSet | None = None,
    rng: np.random.Generator | None = None,
    h_norm: float | None = None,
    solenoidal: bool = True,
) -> SpectralField:
    """Random real field supported on ``modes`` (default: every dealiased mode)."""
    rng = np.random.default_rng() if rng is None else rng
    ops = grid_ops(grid)
    vals = rng.standard_normal(grid.field_shape)
    coeffs = sfft.fftn(vals, axes=ops.axes, norm="forward")
    mask = ops.dealias if modes is None else modes.mask
    coeffs = coeffs * mask
    if solenoidal:
        coeffs = leray_coeffs(coeffs, ops)
    u = SpectralField(grid, coeffs, solenoidal=solenoidal)
    if h_norm is not None:
        cur = norm(u, "H")
        u = u * (h_norm / cur) if cur > 0 else u
    return u
