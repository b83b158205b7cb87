"""Time-periodic forcing built from (spatial mode, temporal Fourier profile) terms."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .spectral import GridSpec, SpectralField, grid_ops, leray_coeffs

__all__ = ["ModalProfile", "ForcingSpec", "build_forcing", "random_forcing"]


@dataclass(frozen=True)
class ModalProfile:
    """One forcing term ``a p(t) e^{ik.x} + c.c.``.

    ``temporal[h]`` for ``h = 0..H`` are the coefficients of the real profile
    ``p(t) = c_0 + 2 Re sum_{h>=1} c_h e^{i h Omega t}``, ``Omega = 2*pi/T``;
    negative harmonics are implied by Hermitian symmetry.  A profile equal to
    ``cos(Omega t)`` therefore has ``temporal = (0, 0.5)``.
    """

    wave_index: tuple[int, ...]
    amplitude: tuple[complex, ...]
    temporal: tuple[complex, ...] = (1.0,)

    def __post_init__(self):
        k = tuple(int(x) for x in self.wave_index)
        object.__setattr__(self, "wave_index", k)
        object.__setattr__(self, "amplitude", tuple(complex(a) for a in self.amplitude))
        object.__setattr__(self, "temporal", tuple(complex(c) for c in self.temporal))
        if len(k) != len(self.amplitude):
            raise ValueError("amplitude length must match the wave index dimension")
        if not any(k):
            raise ValueError("the k = 0 mode is excluded (fields are mean-zero)")
        if not self.temporal:
            raise ValueError("temporal profile needs at least the h = 0 coefficient")
        if abs(self.temporal[0].imag) > 0:
            raise ValueError("the h = 0 temporal coefficient must be real")

    @property
    def harmonic_cutoff(self) -> int:
        return len(self.temporal) - 1

    def profile(self, t, period_T: float) -> np.ndarray:
        """Real temporal profile ``p(t)``."""
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, self.temporal[0].real)
        omega = 2.0 * math.pi / period_T
        for h, c in enumerate(self.temporal[1:], start=1):
            out = out + 2.0 * np.real(c * np.exp(1j * h * omega * t))
        return out

    def is_transverse(self, tol: float = 1e-14) -> bool:
        kdot = sum(ki * ai for ki, ai in zip(self.wave_index, self.amplitude))
        scale = max(abs(a) for a in self.amplitude) if self.amplitude else 0.0
        return abs(kdot) <= tol * max(scale, 1e-300) * max(abs(x) for x in self.wave_index)


@dataclass(frozen=True)
class ForcingSpec:
    """Finite sum of modal profiles sharing the period ``period_T``."""

    period_T: float
    profiles: tuple[ModalProfile, ...] = ()
    scale: float = 1.0
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        if not self.period_T > 0:
            raise ValueError("period_T must be positive")

    @property
    def omega(self) -> float:
        return 2.0 * math.pi / self.period_T

    @property
    def harmonic_cutoff(self) -> int:
        return max((p.harmonic_cutoff for p in self.profiles), default=0)

    @property
    def is_zero(self) -> bool:
        return self.scale == 0.0 or not self.profiles

    def scaled(self, c: float) -> "ForcingSpec":
        return ForcingSpec(self.period_T, self.profiles, self.scale * c)

    def harmonics(self, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
        """Harmonic decomposition ``f_hat(t) = sum_h F_h e^{i h Omega t}``.

        Returns ``(h, F)`` with ``h = -H..H`` and ``F`` of shape
        ``(2H+1,) + grid.field_shape``, already Leray-projected.
        """
        if grid in self._cache:
            return self._cache[grid]
        ops = grid_ops(grid)
        n = grid.n_per_axis
        H = self.harmonic_cutoff
        hs = np.arange(-H, H + 1)
        F = np.zeros((2 * H + 1,) + grid.field_shape, dtype=complex)
        for prof in self.profiles:
            if len(prof.wave_index) != grid.dim:
                raise ValueError(f"profile {prof.wave_index} does not match dim={grid.dim}")
            if any(abs(x) >= n // 2 for x in prof.wave_index):
                raise ValueError(f"wave index {prof.wave_index} not resolved by n_per_axis={n}")
            if not prof.is_transverse():
                warnings.warn(
                    f"forcing amplitude at k={prof.wave_index} is not orthogonal to k; projecting",
                    stacklevel=2,
                )
            a = np.asarray(prof.amplitude) * self.scale
            pos = tuple(x % n for x in prof.wave_index)
            neg = tuple((-x) % n for x in prof.wave_index)
            for h, c in enumerate(prof.temporal):
                for sign in ((1, -1) if h else (1,)):
                    ch = c if sign > 0 else np.conj(c)
                    idx = H + sign * h
                    F[(idx, slice(None)) + pos] += a * ch
                    F[(idx, slice(None)) + neg] += np.conj(a) * ch
        F = leray_coeffs(F, ops)
        F.flags.writeable = False
        self._cache[grid] = (hs, F)
        return hs, F

    def coeffs_at(self, grid: GridSpec, t: float) -> np.ndarray:
        hs, F = self.harmonics(grid)
        tau = math.fmod(t, self.period_T)
        phase = np.exp(1j * hs * self.omega * tau)
        return np.tensordot(phase, F, axes=(0, 0))


def build_forcing(spec: ForcingSpec, t: float, grid: GridSpec) -> SpectralField:
    """Leray-projected forcing field at time ``t`` (period-``T`` in ``t``)."""
    if spec.is_zero:
        return SpectralField.zeros(grid)
    return SpectralField(grid, spec.coeffs_at(grid, t), solenoidal=True)


def random_forcing(
    grid: GridSpec,
    period_T: float,
    seed: int,
    amplitude: float = 1.0,
    harmonic_cutoff: int = 2,
    wave_cutoff: int = 4,
) -> ForcingSpec:
    """Seeded band-limited random forcing.

    Uses the counter-based Philox generator so a 64-bit seed reproduces the
    same forcing on every platform.  Wave vectors with ``0 < |n|^2 <=
    wave_cutoff`` (one representative per ``+-k`` pair) get random transverse
    amplitudes and random temporal profiles up to ``harmonic_cutoff``; the
    result is rescaled so the time-averaged H-norm squared equals
    ``amplitude**2``.
    """
    rng = np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))
    d = grid.dim
    kmax = int(math.isqrt(wave_cutoff))
    kmax = min(kmax, grid.kmax_retained)
    profiles = []
    seen = set()
    for k in np.ndindex(*([2 * kmax + 1] * d)):
        kv = tuple(int(x) - kmax for x in k)
        n2 = sum(x * x for x in kv)
        if n2 == 0 or n2 > wave_cutoff or tuple(-x for x in kv) in seen:
            continue
        seen.add(kv)
        a = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        kk = np.asarray(kv, dtype=float)
        a = a - kk * (kk @ a) / (kk @ kk)
        temporal = [rng.standard_normal()]
        temporal += list(rng.standard_normal(harmonic_cutoff) + 1j * rng.standard_normal(harmonic_cutoff))
        profiles.append(ModalProfile(kv, tuple(a), tuple(temporal)))
    spec = ForcingSpec(period_T, tuple(profiles))
    if not profiles or amplitude == 0:
        return spec.scaled(0.0)
    _, F = spec.harmonics(grid)
    mean_sq = grid.volume * float(np.sum(np.abs(F) ** 2))
    return ForcingSpec(period_T, tuple(profiles), amplitude / math.sqrt(mean_sq))
