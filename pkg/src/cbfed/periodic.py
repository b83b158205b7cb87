"""
Time-periodic solutions.

Two routes are provided.  ``solve_periodic`` iterates the period map
``v0 -> v(T)`` to a fixed point (optionally with Anderson mixing).
``picard_strong`` instead iterates ``v -> S(f + N(v))`` on a whole period,
where ``S`` is the periodic solution operator of the linear mode equations
``u' + omega_k u = h`` and ``N`` collects the nonlinear terms; ``S`` is applied
in closed form per temporal harmonic (``solve_linear_periodic``).
"""

from __future__ import annotations

import logging
import math
import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from .analysis import UniquenessReport, absorption_constant, compute_thresholds, forcing_dual_sq_integral
from .forcing import ForcingSpec
from .integrator import (
    IntegrationError,
    IntegratorConfig,
    Trajectory,
    _GalerkinSystem,
    integrate_period,
    linear_rates,
    poincare_map,
    state_diagnostics,
)
from .nonlinear import convection_coeffs, power_values
from .spectral import GridSpec, ModeSet, PhysicalParams, SpectralField, leray_coeffs, norm

__all__ = [
    "PeriodicSolveReport",
    "invariant_radius",
    "solve_periodic",
    "solve_linear_periodic",
    "green_response",
    "picard_strong",
    "contraction_estimate",
    "parse_acceleration",
]

log = logging.getLogger(__name__)


@dataclass
class PeriodicSolveReport:
    converged: bool
    iterations: int
    residual_history: list[float]
    empirical_contraction: list[float]
    predicted_rate: float | None
    final_state: SpectralField
    uniqueness_flags: dict[str, bool]
    method: str = "poincare"
    acceleration: str = "none"
    message: str = ""
    trajectory: Trajectory | None = None
    lipschitz_factor: float | None = None
    contraction_regime: bool | None = None
    harmonic_truncation: float | None = None
    extras: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "final_residual": self.residual_history[-1] if self.residual_history else None,
            "residual_history": list(self.residual_history),
            "empirical_contraction": list(self.empirical_contraction),
            "predicted_rate": self.predicted_rate,
            "uniqueness_flags": dict(self.uniqueness_flags),
            "method": self.method,
            "acceleration": self.acceleration,
            "message": self.message,
            "final_h_norm": norm(self.final_state, "H"),
            "lipschitz_factor": self.lipschitz_factor,
            "contraction_regime": self.contraction_regime,
            "harmonic_truncation": self.harmonic_truncation,
        }


def invariant_radius(params: PhysicalParams, f: ForcingSpec, m: ModeSet | GridSpec) -> float:
    """Radius of an H-ball mapped into itself by the period map.

    The weighted forcing integral is evaluated exactly from the temporal
    harmonics of ``f``.  The result does not depend on the Galerkin level;
    ``m`` only supplies the grid on which the forcing is represented.
    """
    if not params.beta > 0:
        raise ValueError("invariant radius needs beta > 0")
    grid = m.grid if isinstance(m, ModeSet) else m
    w = params.omega
    T = params.period_T
    forced = forcing_dual_sq_integral(f, grid, weight_rate=w) / params.mu
    free = absorption_constant(params) * params.volume / w
    return math.sqrt((forced + free) / -math.expm1(-w * T))


def _uniqueness(params: PhysicalParams) -> tuple[UniquenessReport | None, dict[str, bool]]:
    try:
        rep = compute_thresholds(params)
    except ValueError:
        return None, {"supercritical_A": False, "supercritical_B": False, "critical": False}
    return rep, {
        "supercritical_A": rep.condition_supercritical_A,
        "supercritical_B": rep.condition_supercritical_B,
        "critical": rep.condition_critical,
    }


def parse_acceleration(spec: str) -> int:
    """``"none"`` -> 0, ``"anderson(k)"`` -> k."""
    spec = spec.strip().lower()
    if spec == "none":
        return 0
    m = re.fullmatch(r"anderson\((\d+)\)", spec)
    if not m or int(m.group(1)) < 1:
        raise ValueError(f"acceleration must be 'none' or 'anderson(k)' with k >= 1, got {spec!r}")
    return int(m.group(1))


class _Anderson:
    """Type-II Anderson mixing on ``g(x) = T(x) - x`` over real-flattened vectors."""

    def __init__(self, depth: int):
        self.depth = depth
        self.dx: list[np.ndarray] = []
        self.dg: list[np.ndarray] = []
        self.prev: tuple[np.ndarray, np.ndarray] | None = None

    def step(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        if self.prev is not None:
            self.dx.append(x - self.prev[0])
            self.dg.append(g - self.prev[1])
            if len(self.dx) > self.depth:
                self.dx.pop(0)
                self.dg.pop(0)
        self.prev = (x, g)
        if not self.dx:
            return x + g
        G = np.stack(self.dg, axis=1)
        X = np.stack(self.dx, axis=1)
        coef, *_ = np.linalg.lstsq(G, g, rcond=None)
        return x + g - (X + G) @ coef


def _as_real(c: np.ndarray) -> np.ndarray:
    return np.concatenate([c.real.ravel(), c.imag.ravel()])


def _from_real(x: np.ndarray, shape) -> np.ndarray:
    half = x.size // 2
    return (x[:half] + 1j * x[half:]).reshape(shape)


def solve_periodic(
    params: PhysicalParams,
    f: ForcingSpec,
    grid: GridSpec,
    cfg: IntegratorConfig = IntegratorConfig(),
    v0_init: SpectralField | None = None,
    tol: float = 1e-9,
    max_iter: int = 50,
    acceleration: str = "none",
    record_trajectory: bool = True,
) -> PeriodicSolveReport:
    """Fixed point of the period map by Picard iteration (optionally Anderson-mixed).

    Each iteration evaluates ``T(x_n)`` once and records
    ``||x_n - T(x_n)||_H``.  Convergence means that residual is ``<= tol``, and
    ``x_n`` is returned.  Running out of iterations or blowing up yields a
    non-converged report, never an exception.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    depth = parse_acceleration(acceleration)
    modes = ModeSet(grid, cfg.galerkin_level)
    x = SpectralField.zeros(grid) if v0_init is None else v0_init
    if x.grid != grid:
        raise ValueError("initial state lives on a different grid")
    thresholds, flags = _uniqueness(params)
    rate = thresholds.applicable_rate if thresholds else None
    predicted = math.exp(-rate * params.period_T / 2.0) if rate else None
    if params.beta > 0:
        R = invariant_radius(params, f, modes)
        if norm(x, "H") > R:
            warnings.warn(f"initial state norm {norm(x, 'H'):.3g} exceeds the invariant radius {R:.3g}", stacklevel=2)

    mixer = _Anderson(depth) if depth else None
    history: list[float] = []
    converged = False
    message = ""
    for it in range(1, max_iter + 1):
        try:
            y = poincare_map(x, params, f, cfg)
        except IntegrationError as exc:
            message = f"aborted: {exc}"
            log.warning(message)
            break
        res = norm(y - x, "H")
        history.append(res)
        log.debug("iteration %d residual %.3e", it, res)
        if not math.isfinite(res):
            message = "aborted: non-finite residual"
            break
        if res <= tol:
            converged = True
            break
        if mixer is None:
            x = y
        else:
            nxt = mixer.step(_as_real(x.coeffs), _as_real(y.coeffs - x.coeffs))
            x = SpectralField(grid, _from_real(nxt, grid.field_shape) * modes.mask, solenoidal=True)
    else:
        message = f"no convergence in {max_iter} iterations"

    ratios = [b / a for a, b in zip(history, history[1:]) if a > 0]
    traj = None
    if converged and record_trajectory:
        traj = integrate_period(x, params, f, cfg)
    return PeriodicSolveReport(
        converged=converged,
        iterations=len(history),
        residual_history=history,
        empirical_contraction=ratios,
        predicted_rate=predicted,
        final_state=x,
        uniqueness_flags=flags,
        method="poincare",
        acceleration=acceleration,
        message=message or "converged",
        trajectory=traj,
        extras={"thresholds": thresholds.as_dict() if thresholds else None},
    )


def green_response(omega: np.ndarray, nu: float, t: np.ndarray, T: float) -> np.ndarray:
    """Periodic response to ``h(s) = e^{i nu s}`` from the scalar Green kernel.

    Evaluates ``e^{-omega t}/(1-e^{-omega T}) [int_0^t e^{omega s} h ds +
    e^{-omega T} int_t^T e^{omega s} h ds]`` with the antiderivatives written
    out, in a form free of overflow for large ``omega t``.  For ``nu`` a
    multiple of ``2 pi / T`` it reduces to ``e^{i nu t}/(omega + i nu)``.
    """
    omega = np.asarray(omega, dtype=float)
    t = np.asarray(t, dtype=float)
    z = omega + 1j * nu
    e_wt = np.exp(-omega * t)
    e_wT = np.exp(-omega * T)
    head = np.exp(1j * nu * t) - e_wt
    tail = np.exp(1j * nu * T) * e_wt - e_wT * np.exp(1j * nu * t)
    return (head + tail) / (z * -np.expm1(-omega * T))


def solve_linear_periodic(
    params: PhysicalParams,
    f: ForcingSpec,
    grid: GridSpec,
    n_samples: int = 256,
    modes: ModeSet | None = None,
) -> Trajectory:
    """Exact periodic solution of ``v' + (mu A + alpha) v = P_m f``.

    Samples are taken at ``t_j = j T / n_samples`` for ``j = 0..n_samples``; the
    last sample is the first one, so ``v(0) = v(T)`` holds exactly.
    """
    if not grid.matches(params):
        raise ValueError("grid dimension/box length disagree with the physical parameters")
    modes = ModeSet(grid) if modes is None else modes
    omega = linear_rates(params, grid)
    if not np.all(omega[modes.mask] > 0):
        raise ValueError("every retained mode needs omega_k > 0")
    T = params.period_T
    times = np.linspace(0.0, T, n_samples + 1)
    states = np.zeros((n_samples + 1,) + grid.field_shape, dtype=complex)
    if not f.is_zero:
        hs, F = f.harmonics(grid)
        Omega = 2.0 * math.pi / T
        tau = np.fmod(times, T)
        tau[-1] = 0.0
        for h, Fh in zip(hs, F):
            if not np.any(Fh):
                continue
            resp = green_response(omega[None], h * Omega, tau.reshape((-1,) + (1,) * grid.dim), T)
            states += resp[:, None] * (Fh * modes.mask)[None]
    states[-1] = states[0]
    diag = state_diagnostics(states, times, params, f, grid)
    return Trajectory(
        times=times,
        diagnostics=diag,
        state_times=times,
        states=states,
        grid=grid,
        params=params,
        meta={"scheme": "green_kernel", "n_samples": n_samples},
    )


def _batched_nonlinear(V: np.ndarray, sys: _GalerkinSystem) -> np.ndarray:
    """``P_m[-B(v) - beta C(v) - gamma C~(v)]`` for a stack of states."""
    ops = sys.ops
    p = sys.params
    out = -convection_coeffs(V, V, ops, sys.m_conv)
    if p.beta or p.gamma:
        vals = ops.to_values(V, sys.m_pow)
        total = 0.0
        if p.beta:
            total = total + p.beta * power_values(vals, p.r, ops)[0]
        if p.gamma:
            total = total + p.gamma * power_values(vals, p.q, ops)[0]
        out -= leray_coeffs(ops.from_values(total, sys.m_pow) * ops.no_nyquist, ops)
    return out * sys.mask


def picard_strong(
    params: PhysicalParams,
    f: ForcingSpec,
    grid: GridSpec,
    cfg: IntegratorConfig = IntegratorConfig(),
    tol: float = 1e-10,
    max_iter: int = 100,
    harmonic_cutoff: int | None = None,
) -> PeriodicSolveReport:
    """Whole-period Picard iteration ``v <- S(f + N(v))``.

    The nonlinear term is sampled at ``cfg.n_steps`` equispaced times,
    expanded in temporal harmonics ``|h| <= harmonic_cutoff`` (default
    ``n_steps // 4``), and mapped through the closed-form periodic kernel
    ``1/(omega_k + i h Omega)``.  The forcing part is applied exactly.  The
    residual is ``max_t ||v_new(t) - v(t)||_H``.
    """
    n_t = cfg.n_steps
    H = n_t // 4 if harmonic_cutoff is None else int(harmonic_cutoff)
    if not 0 <= H < n_t // 2:
        raise ValueError(f"harmonic cutoff must lie in [0, {n_t // 2})")
    modes = ModeSet(grid, cfg.galerkin_level)
    if not grid.matches(params):
        raise ValueError("grid dimension/box length disagree with the physical parameters")
    sys = _GalerkinSystem(params, f, modes, cfg.nonlinear)
    T = params.period_T
    Omega = 2.0 * math.pi / T
    omega = sys.lin
    times = np.arange(n_t) * (T / n_t)
    vol = grid.volume

    # forcing response, exact per harmonic
    base = np.zeros((n_t,) + grid.field_shape, dtype=complex)
    for h, Fh in zip(sys.hs, sys.F):
        phase = np.exp(1j * h * Omega * times).reshape((-1,) + (1,) * (grid.dim + 1))
        base += phase * (Fh / (omega + 1j * h * Omega))[None]

    hfreq = np.fft.fftfreq(n_t, d=1.0 / n_t)
    keep = (np.abs(hfreq) <= H).reshape((-1,) + (1,) * (grid.dim + 1))
    kernel = 1.0 / (omega[None, None] + 1j * (hfreq * Omega).reshape((-1,) + (1,) * (grid.dim + 1)))
    kernel = kernel * keep * modes.mask

    def sup_norm(X: np.ndarray) -> float:
        return float(np.sqrt(vol * np.max(np.sum(np.abs(X.reshape(n_t, -1)) ** 2, axis=1))))

    thresholds, flags = _uniqueness(params)
    V = np.zeros_like(base)
    history: list[float] = []
    first = None
    converged = False
    message = ""
    trunc = 0.0
    for it in range(1, max_iter + 1):
        N = _batched_nonlinear(V, sys) if np.any(V) else np.zeros_like(V)
        Nh = np.fft.fft(N, axis=0)
        total = float(np.sum(np.abs(Nh) ** 2))
        trunc = math.sqrt(float(np.sum(np.abs(Nh * ~keep) ** 2)) / total) if total > 0 else 0.0
        Vn = base + np.fft.ifft(Nh * kernel, axis=0)
        res = sup_norm(Vn - V)
        history.append(res)
        size = sup_norm(Vn)
        first = size if first is None else first
        V = Vn
        if not math.isfinite(res) or (first > 0 and size > 1e3 * first):
            message = "diverged"
            break
        if res <= tol:
            converged = True
            break
    else:
        message = f"no convergence in {max_iter} iterations"

    ratios = [b / a for a, b in zip(history, history[1:]) if a > 0]
    lip = ratios[-1] if ratios else (0.0 if history and history[-1] == 0 else None)
    states = np.concatenate([V, V[:1]])
    all_times = np.append(times, T)
    traj = Trajectory(
        times=all_times,
        diagnostics=state_diagnostics(states, all_times, params, f, grid, cfg.nonlinear),
        state_times=all_times,
        states=states,
        grid=grid,
        params=params,
        meta={"scheme": "harmonic_picard", "n_samples": n_t, "harmonic_cutoff": H},
    )
    rate = thresholds.applicable_rate if thresholds else None
    return PeriodicSolveReport(
        converged=converged,
        iterations=len(history),
        residual_history=history,
        empirical_contraction=ratios,
        predicted_rate=math.exp(-rate * T / 2.0) if rate else None,
        final_state=SpectralField(grid, V[0], solenoidal=True),
        uniqueness_flags=flags,
        method="picard_strong",
        message=message or "converged",
        trajectory=traj,
        lipschitz_factor=lip,
        contraction_regime=(lip is not None and lip < 1.0),
        harmonic_truncation=trunc,
    )


def contraction_estimate(report: PeriodicSolveReport | list[float] | np.ndarray, floor: float | None = None) -> float:
    """Per-iteration contraction ratio fitted to the log-residuals.

    Residuals at or below ``floor`` (default: ``1e-13`` times the first one)
    are dropped as round-off, unless fewer than two would remain.
    """
    res = np.asarray(report.residual_history if isinstance(report, PeriodicSolveReport) else report, dtype=float)
    if res.size < 3:
        raise ValueError("contraction estimate needs at least 3 residuals")
    if not np.all(np.isfinite(res)) or np.any(res < 0):
        raise ValueError("residuals must be finite and nonnegative")
    if res[0] == 0:
        return 0.0
    floor = 1e-13 * res[0] if floor is None else floor
    idx = np.nonzero(res > floor)[0]
    if idx.size < 2:
        return 0.0
    slope, _ = np.polyfit(idx.astype(float), np.log(res[idx]), 1)
    return float(np.exp(slope))
