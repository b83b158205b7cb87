"""
Time integration of the Galerkin-truncated damped Navier-Stokes system.

The production scheme (``imex_if2``) is a second-order exponential
(integrating-factor) Runge-Kutta rule: the linear part ``-(mu A + alpha)`` is
propagated exactly per mode, the forcing's temporal harmonics are integrated
in closed form against the same exponential, and the nonlinear terms
``-B(v) - beta C(v) - gamma C~(v)`` are advanced with the two-stage ETD2RK
correction.  ``oracle_integrate`` is an independent classical RK4 integrator
that evaluates the nonlinear terms with dense Fourier matrices instead of FFTs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .forcing import ForcingSpec
from .nonlinear import DEFAULT_EVAL, NonlinearEvalConfig, convection_coeffs, power_values
from .spectral import (
    GridSpec,
    ModeSet,
    PhysicalParams,
    SpectralField,
    grid_ops,
    leray_coeffs,
    norm,
)

__all__ = [
    "IntegratorConfig",
    "Trajectory",
    "IntegrationError",
    "DIAGNOSTIC_KEYS",
    "rhs_eval",
    "state_diagnostics",
    "linear_rates",
    "integrate_period",
    "oracle_integrate",
    "poincare_map",
]

DIAGNOSTIC_KEYS = ("h_norm", "v_norm", "lr1_norm", "lq1_norm", "forcing_pairing")
BLOWUP_FACTOR = 1e6


class IntegrationError(RuntimeError):
    """Integration aborted (blow-up or non-finite state)."""


class IntegratorConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_steps: int = Field(default=256, ge=16, description="steps per period")
    scheme: Literal["imex_if2", "oracle_rk4"] = "imex_if2"
    galerkin_level: int | None = Field(default=None, ge=1, description="max |n|^2 of retained modes")
    state_cadence: int = Field(default=1, ge=1, description="keep every k-th state")
    nonlinear: NonlinearEvalConfig = DEFAULT_EVAL


@dataclass
class Trajectory:
    """Sampled solution over ``[0, T]``.

    ``diagnostics`` holds one value per entry of ``times``; ``states`` holds the
    coefficient arrays at ``state_times`` (a thinned subset of ``times``).
    """

    times: np.ndarray
    diagnostics: dict[str, np.ndarray]
    state_times: np.ndarray
    states: np.ndarray
    grid: GridSpec
    params: PhysicalParams
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)

    def field(self, i: int) -> SpectralField:
        return SpectralField(self.grid, self.states[i], solenoidal=True)

    @property
    def initial(self) -> SpectralField:
        return self.field(0)

    @property
    def final(self) -> SpectralField:
        return self.field(-1)

    def fields(self) -> list[SpectralField]:
        return [self.field(i) for i in range(len(self.states))]


def linear_rates(params: PhysicalParams, grid: GridSpec) -> np.ndarray:
    """Per-mode decay rates ``omega_k = mu lambda_k + alpha``."""
    return params.mu * grid_ops(grid).k2 + params.alpha


def _check_setup(v0: SpectralField, params: PhysicalParams, modes: ModeSet) -> None:
    if not v0.grid.matches(params):
        raise ValueError("grid dimension/box length disagree with the physical parameters")
    if modes.grid != v0.grid:
        raise ValueError("mode set and initial state live on different grids")
    if not modes.contains(v0, rtol=1e-13):
        raise ValueError("initial state has coefficients outside the Galerkin mode set")
    ops = grid_ops(v0.grid)
    div = np.abs(np.sum(ops.k * v0.coeffs, axis=0)).max(initial=0.0)
    if div > 1e-10 * max(np.abs(v0.coeffs).max(initial=0.0), 1e-300) * ops.scale * ops.n:
        raise ValueError("initial state is not divergence-free")


class _GalerkinSystem:
    """Nonlinear right side restricted to a mode set, on raw coefficients."""

    def __init__(self, params: PhysicalParams, forcing: ForcingSpec, modes: ModeSet, nl: NonlinearEvalConfig):
        grid = modes.grid
        self.params = params
        self.forcing = forcing
        self.grid = grid
        self.ops = grid_ops(grid)
        self.mask = modes.mask
        self.m_conv = self.ops.padded_size(nl.padding_factor)
        self.m_pow = self.ops.padded_size(nl.power_padding_factor)
        self.lin = linear_rates(params, grid)
        self.vol = grid.volume
        if forcing.is_zero:
            self.hs = np.zeros(0, dtype=int)
            self.F = np.zeros((0,) + grid.field_shape, dtype=complex)
        else:
            self.hs, F = forcing.harmonics(grid)
            self.F = F * self.mask
        self.Omega = 2.0 * math.pi / params.period_T

    def power_terms(self, c: np.ndarray) -> tuple[np.ndarray | None, float, float]:
        """``beta |v|^(r-1) v + gamma |v|^(q-1) v`` values and the L^(r+1), L^(q+1) norms."""
        p = self.params
        ops = self.ops
        vals = ops.to_values(c, self.m_pow)
        mag = np.sqrt(np.sum(vals**2, axis=0))
        lr = (self.vol * np.mean(mag ** (p.r + 1.0))) ** (1.0 / (p.r + 1.0))
        lq = (self.vol * np.mean(mag ** (p.q + 1.0))) ** (1.0 / (p.q + 1.0))
        total = None
        if p.beta:
            total = p.beta * power_values(vals, p.r, ops)[0]
        if p.gamma:
            g = p.gamma * power_values(vals, p.q, ops)[0]
            total = g if total is None else total + g
        return total, float(lr), float(lq)

    def nonlinear(self, c: np.ndarray, norms: bool = True) -> tuple[np.ndarray, float, float]:
        """``P_m[-B(v) - beta C(v) - gamma C~(v)]`` and the two power norms (NaN unless ``norms``)."""
        ops = self.ops
        out = -convection_coeffs(c, c, ops, self.m_conv)
        if not (norms or self.params.beta or self.params.gamma):
            return out * self.mask, math.nan, math.nan
        total, lr, lq = self.power_terms(c)
        if total is not None:
            out -= leray_coeffs(ops.from_values(total, self.m_pow) * ops.no_nyquist, ops)
        return out * self.mask, lr, lq

    def forcing_coeffs(self, t: float) -> np.ndarray:
        if not len(self.hs):
            return np.zeros(self.grid.field_shape, dtype=complex)
        tau = math.fmod(t, self.params.period_T)
        return np.tensordot(np.exp(1j * self.hs * self.Omega * tau), self.F, axes=(0, 0))

    def h_v_norms(self, c: np.ndarray) -> tuple[float, float]:
        mag2 = np.sum(np.abs(c) ** 2, axis=0)
        return math.sqrt(self.vol * mag2.sum()), math.sqrt(self.vol * np.sum(self.ops.k2 * mag2))

    def pairing(self, f: np.ndarray, c: np.ndarray) -> float:
        return float(self.vol * np.real(np.vdot(f, c)))

    def blowup_bound(self, c0: np.ndarray) -> float:
        h0 = self.h_v_norms(c0)[0]
        fs = sum(math.sqrt(self.vol * float(np.sum(np.abs(Fh) ** 2))) for Fh in self.F)
        return max(h0, fs * self.params.period_T / max(self.params.omega * self.params.period_T, 1.0), 1e-12)


def state_diagnostics(
    states: np.ndarray,
    times: np.ndarray,
    params: PhysicalParams,
    f: ForcingSpec,
    grid: GridSpec,
    nl: NonlinearEvalConfig = DEFAULT_EVAL,
) -> dict[str, np.ndarray]:
    """Diagnostic columns for a stack of coefficient arrays sampled at ``times``."""
    sys = _GalerkinSystem(params, f, ModeSet(grid), nl)
    out = {k: np.empty(len(times)) for k in DIAGNOSTIC_KEYS}
    for i, (t, c) in enumerate(zip(times, states)):
        out["h_norm"][i], out["v_norm"][i] = sys.h_v_norms(c)
        _, out["lr1_norm"][i], out["lq1_norm"][i] = sys.power_terms(c)
        out["forcing_pairing"][i] = sys.pairing(sys.forcing_coeffs(t), c)
    return out


def rhs_eval(
    v: SpectralField,
    t: float,
    params: PhysicalParams,
    f: ForcingSpec,
    modes: ModeSet,
    nl: NonlinearEvalConfig = DEFAULT_EVAL,
) -> SpectralField:
    """Galerkin right side ``P_m[f - B(v) - alpha v - beta C(v) - gamma C~(v)] - mu A v``.

    The linear part ``-(mu A + alpha I)`` is available separately through
    :func:`linear_rates`.
    """
    if not modes.contains(v, rtol=1e-13):
        raise ValueError("state has coefficients outside the Galerkin mode set")
    sys = _GalerkinSystem(params, f, modes, nl)
    nonlin, _, _ = sys.nonlinear(v.coeffs)
    out = nonlin + sys.forcing_coeffs(t) - sys.lin * v.coeffs
    return SpectralField(v.grid, out * modes.mask, solenoidal=True)


def _phi_functions(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``phi1(z) = (e^z - 1)/z`` and ``phi2(z) = (e^z - 1 - z)/z^2`` without cancellation."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-2
    zs = np.where(small, 1.0, z)
    phi1 = np.expm1(zs) / zs
    phi2 = (np.expm1(zs) - zs) / zs**2
    # Taylor tails for |z| < 1e-2 (truncation error < 1e-18)
    zt = np.where(small, z, 0.0)
    t1 = 1 + zt / 2 + zt**2 / 6 + zt**3 / 24 + zt**4 / 120 + zt**5 / 720 + zt**6 / 5040
    t2 = 0.5 + zt / 6 + zt**2 / 24 + zt**3 / 120 + zt**4 / 720 + zt**5 / 5040 + zt**6 / 40320
    return np.where(small, t1, phi1), np.where(small, t2, phi2)


# overflow inside a step is reported through the blow-up check instead
@np.errstate(over="ignore", invalid="ignore")
def _march(
    v0: SpectralField,
    params: PhysicalParams,
    f: ForcingSpec,
    cfg: IntegratorConfig,
    record: bool,
    n_periods: int = 1,
) -> Trajectory | np.ndarray:
    modes = ModeSet(v0.grid, cfg.galerkin_level)
    _check_setup(v0, params, modes)
    sys = _GalerkinSystem(params, f, modes, cfg.nonlinear)
    T = params.period_T
    n_total = cfg.n_steps * n_periods
    dt = T / cfg.n_steps
    lin = sys.lin
    E = np.exp(-lin * dt)
    phi1, phi2 = _phi_functions(-lin * dt)
    phi1 = dt * phi1 * modes.mask
    phi2 = dt * phi2 * modes.mask
    E = E * modes.mask
    if len(sys.hs):
        nu = sys.hs * sys.Omega
        shape = (-1,) + (1,) * (v0.grid.dim + 1)
        nu_b = nu.reshape(shape)
        G = sys.F * (np.exp(1j * nu_b * dt) - E) / (lin + 1j * nu_b)
    c = np.array(v0.coeffs)
    bound = BLOWUP_FACTOR * sys.blowup_bound(c)

    if record:
        diag = {k: np.empty(n_total + 1) for k in DIAGNOSTIC_KEYS}
        keep = list(range(0, n_total + 1, cfg.state_cadence))
        if keep[-1] != n_total:
            keep.append(n_total)
        keep_set = set(keep)
        states = np.empty((len(keep),) + v0.grid.field_shape, dtype=complex)
        si = 0

    for n in range(n_total + 1):
        phase = np.exp(1j * sys.hs * sys.Omega * ((n % cfg.n_steps) * dt)) if len(sys.hs) else None
        last = n == n_total
        if last and not record:
            break
        N0, lr, lq = sys.nonlinear(c, norms=record) if not (last and record) else (None, *sys.power_terms(c)[1:])
        if record:
            h, vn = sys.h_v_norms(c)
            if not math.isfinite(h) or h > bound:
                raise IntegrationError(f"blow-up at t={n * dt:.6g}: ||v||_H={h:.3e} exceeds {bound:.3e}")
            diag["h_norm"][n] = h
            diag["v_norm"][n] = vn
            diag["lr1_norm"][n] = lr
            diag["lq1_norm"][n] = lq
            fn = np.tensordot(phase, sys.F, axes=(0, 0)) if phase is not None else 0.0
            diag["forcing_pairing"][n] = sys.pairing(fn, c) if phase is not None else 0.0
            if n in keep_set:
                states[si] = c
                si += 1
        if last:
            break
        a = E * c + phi1 * N0
        if phase is not None:
            a += np.tensordot(phase, G, axes=(0, 0))
        N1, _, _ = sys.nonlinear(a, norms=False)
        c = a + phi2 * (N1 - N0)
        if not record and (n & 15) == 15:
            h = sys.h_v_norms(c)[0]
            if not math.isfinite(h) or h > bound:
                raise IntegrationError(f"blow-up at t={(n + 1) * dt:.6g}: ||v||_H={h:.3e} exceeds {bound:.3e}")

    if not record:
        h = sys.h_v_norms(c)[0]
        if not math.isfinite(h) or h > bound:
            raise IntegrationError(f"blow-up at t={n_total * dt:.6g}: ||v||_H={h:.3e} exceeds {bound:.3e}")
        return c
    times = np.linspace(0.0, T * n_periods, n_total + 1)
    return Trajectory(
        times=times,
        diagnostics=diag,
        state_times=times[keep],
        states=states,
        grid=v0.grid,
        params=params,
        meta={"scheme": "imex_if2", "n_steps": cfg.n_steps, "galerkin_level": cfg.galerkin_level, "dt": dt},
    )


def integrate_period(
    v0: SpectralField,
    params: PhysicalParams,
    f: ForcingSpec,
    cfg: IntegratorConfig = IntegratorConfig(),
    n_periods: int = 1,
) -> Trajectory:
    """Integrate over ``[0, n_periods*T]`` recording diagnostics at every step.

    Raises:
        IntegrationError: if ``||v||_H`` exceeds ``1e6`` times the initial scale.
    """
    if cfg.scheme == "oracle_rk4":
        return oracle_integrate(
            v0, params, f, ModeSet(v0.grid, cfg.galerkin_level), params.period_T / cfg.n_steps,
            nl=cfg.nonlinear, cadence=cfg.state_cadence, n_periods=n_periods,
        )
    return _march(v0, params, f, cfg, record=True, n_periods=n_periods)


def poincare_map(v0: SpectralField, params: PhysicalParams, f: ForcingSpec, cfg: IntegratorConfig = IntegratorConfig()) -> SpectralField:
    """Period map ``v0 -> v(T)``."""
    if cfg.scheme == "oracle_rk4":
        return integrate_period(v0, params, f, cfg).final
    c = _march(v0, params, f, cfg, record=False)
    return SpectralField(v0.grid, c, solenoidal=True)


class _DenseSystem:
    """Right side over an explicit list of modes using dense Fourier matrices."""

    MAX_MODES = 500

    def __init__(self, params: PhysicalParams, forcing: ForcingSpec, modes: ModeSet, nl: NonlinearEvalConfig):
        grid = modes.grid
        n = grid.n_per_axis
        d = grid.dim
        self.params = params
        self.forcing = forcing
        self.grid = grid
        self.kint = modes.wave_indices  # (nm, d)
        if len(self.kint) > self.MAX_MODES:
            raise ValueError(f"oracle limited to {self.MAX_MODES} modes, got {len(self.kint)}")
        self.kvec = self.kint * (2.0 * math.pi / grid.box_length)
        self.k2 = np.sum(self.kvec**2, axis=1)
        self.lin = params.mu * self.k2 + params.alpha

        def nodes(factor: float) -> np.ndarray:
            m = int(math.ceil(factor * n - 1e-9))
            m += m % 2
            axis = np.arange(m) * grid.box_length / m
            pts = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
            return np.exp(1j * pts @ self.kvec.T)  # (M^d, nm)

        self.Ec = nodes(nl.padding_factor)
        self.Ep = nodes(nl.power_padding_factor)
        self.EcH = self.Ec.conj().T / self.Ec.shape[0]
        self.EpH = self.Ep.conj().T / self.Ep.shape[0]
        self.full_index = tuple(np.mod(self.kint[:, j], n) for j in range(d))
        # forcing tabulated per harmonic straight from the profiles
        H = forcing.harmonic_cutoff
        self.Omega = 2.0 * math.pi / forcing.period_T
        self.hs = np.arange(-H, H + 1)
        self.Fh = np.zeros((2 * H + 1,) + self.kvec.shape, dtype=complex)
        lookup = {tuple(int(x) for x in k): i for i, k in enumerate(self.kint)}
        for prof in forcing.profiles if not forcing.is_zero else ():
            a = np.asarray(prof.amplitude) * forcing.scale
            for h, ch in enumerate(prof.temporal):
                for sign in ((1, -1) if h else (1,)):
                    c_h = ch if sign > 0 else np.conj(ch)
                    i = lookup.get(prof.wave_index)
                    if i is not None:
                        self.Fh[H + sign * h, i] += a * c_h
                    i = lookup.get(tuple(-x for x in prof.wave_index))
                    if i is not None:
                        self.Fh[H + sign * h, i] += np.conj(a) * c_h
        self.Fh = np.stack([self.project(F) for F in self.Fh])

    def project(self, c: np.ndarray) -> np.ndarray:
        """Leray projection of (nm, d) coefficients."""
        kdot = np.sum(self.kvec * c, axis=1)
        return c - self.kvec * (kdot / self.k2)[:, None]

    def forcing_at(self, t: float) -> np.ndarray:
        phase = np.exp(1j * self.hs * self.Omega * t)
        return np.tensordot(phase, self.Fh, axes=(0, 0))

    def rhs(self, c: np.ndarray, t: float) -> np.ndarray:
        p = self.params
        d = self.grid.dim
        # values and all first derivatives in one dense product
        stacked = np.concatenate([c] + [1j * self.kvec[:, i : i + 1] * c for i in range(d)], axis=1)
        vals = np.real(self.Ec @ stacked)
        u = vals[:, :d]
        conv = sum(u[:, i : i + 1] * vals[:, d * (i + 1) : d * (i + 2)] for i in range(d))
        nonlin = self.EcH @ conv
        if p.beta or p.gamma:
            up = np.real(self.Ep @ c)
            mag = np.sqrt(np.einsum("ij,ij->i", up, up))
            pos = mag > 0
            fac = np.zeros_like(mag)
            fac[pos] = p.beta * mag[pos] ** (p.r - 1.0)
            if p.gamma:
                fac[pos] += p.gamma * mag[pos] ** (p.q - 1.0)
            nonlin = nonlin + self.EpH @ (fac[:, None] * up)
        return self.project(self.forcing_at(t) - nonlin) - self.lin[:, None] * c

    def gather(self, coeffs: np.ndarray) -> np.ndarray:
        return np.stack([coeffs[(j,) + self.full_index] for j in range(self.grid.dim)], axis=1)

    def scatter(self, c: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.field_shape, dtype=complex)
        for j in range(self.grid.dim):
            out[(j,) + self.full_index] = c[:, j]
        return out


def oracle_integrate(
    v0: SpectralField,
    params: PhysicalParams,
    f: ForcingSpec,
    modes: ModeSet,
    dt: float,
    nl: NonlinearEvalConfig = DEFAULT_EVAL,
    cadence: int = 1,
    n_periods: int = 1,
) -> Trajectory:
    """Reference trajectory by classical RK4 with dense mode-by-mode evaluation.

    ``dt`` must divide the period into an integer number of steps (to 1e-9).
    Only intended for small mode sets (at most 500 wave vectors).
    """
    _check_setup(v0, params, modes)
    T = params.period_T
    n_steps = int(round(T / dt))
    if n_steps < 1 or abs(n_steps * dt - T) > 1e-9 * T:
        raise ValueError(f"dt={dt} does not divide the period {T}")
    dt = T / n_steps
    sys = _DenseSystem(params, f, modes, nl)
    c = sys.gather(v0.coeffs)
    n_total = n_steps * n_periods
    keep = list(range(0, n_total + 1, cadence))
    if keep[-1] != n_total:
        keep.append(n_total)
    states = []
    h0 = norm(v0, "H")
    bound = BLOWUP_FACTOR * max(h0, 1e-12, sum(abs(a) for p in f.profiles for a in p.amplitude) * f.scale)
    for n in range(n_total + 1):
        if n in keep:
            states.append(sys.scatter(c))
        if n == n_total:
            break
        t = n * dt
        k1 = sys.rhs(c, t)
        k2 = sys.rhs(c + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = sys.rhs(c + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = sys.rhs(c + dt * k3, t + dt)
        c = c + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        h = math.sqrt(v0.grid.volume * float(np.sum(np.abs(c) ** 2)))
        if not math.isfinite(h) or h > bound:
            raise IntegrationError(f"oracle blow-up at t={t + dt:.6g}: ||v||_H={h:.3e}")
    states = np.asarray(states)
    times = np.linspace(0.0, T * n_periods, n_total + 1)
    diag = {k: np.full(len(keep), np.nan) for k in DIAGNOSTIC_KEYS}
    for i, s in enumerate(states):
        fld = SpectralField(v0.grid, s, solenoidal=True)
        diag["h_norm"][i] = norm(fld, "H")
        diag["v_norm"][i] = norm(fld, "V")
        diag["lr1_norm"][i] = norm(fld, "Lp", p=params.r + 1, pad=nl.power_padding_factor)
        diag["lq1_norm"][i] = norm(fld, "Lp", p=params.q + 1, pad=nl.power_padding_factor)
        fk = sys.scatter(sys.forcing_at(times[keep[i]]))
        diag["forcing_pairing"][i] = v0.grid.volume * float(np.real(np.vdot(fk, s)))
    return Trajectory(
        times=times[keep],
        diagnostics=diag,
        state_times=times[keep],
        states=states,
        grid=v0.grid,
        params=params,
        meta={"scheme": "oracle_rk4", "dt": dt, "n_steps": n_steps},
    )
