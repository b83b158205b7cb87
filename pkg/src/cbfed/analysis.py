"""
Closed-form uniqueness thresholds, energy bookkeeping and decay-rate fits.

All decay rates in :class:`UniquenessReport` are rates for the *squared*
H-norm of a trajectory difference, ``||dv(t)||^2 <= ||dv(0)||^2 e^{-rate t}``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .forcing import ForcingSpec
from .integrator import Trajectory
from .spectral import PhysicalParams, grid_ops

__all__ = [
    "UniquenessReport",
    "compute_thresholds",
    "absorption_constant",
    "forcing_dual_sq_coeffs",
    "forcing_dual_sq_integral",
    "energy_residual_series",
    "apriori_bound_check",
    "AprioriCheck",
    "DecayFit",
    "decay_rate_fit",
]


@dataclass(frozen=True)
class UniquenessReport:
    zeta: float | None
    eta: float | None
    kappa: float | None
    zeta_gamma0: float | None
    L: float | None
    L1: float | None
    Ltilde: float | None
    condition_supercritical_A: bool
    condition_supercritical_B: bool
    condition_critical: bool
    applicable_rate: float | None
    lambda1: float

    def as_dict(self) -> dict:
        return asdict(self)


def _pump_term(gamma: float, q: float, beta: float, r: float) -> float:
    """Second addend shared by zeta and eta (vanishes at gamma = 0)."""
    if gamma == 0:
        return 0.0
    base = abs(gamma) * q * 2.0 ** (q - 2.0)
    return (
        base ** ((r - 1.0) / (r - q))
        * ((r - q) / (r - 1.0))
        * (2.0 * (q - 1.0) / (beta * (r - 1.0))) ** ((q - 1.0) / (r - 1.0))
        * (1.0 + 2.0 ** ((q - 1.0) / (r - 1.0)))
    )


def _absorb_term(mu: float, beta: float, r: float, c: float) -> float:
    return (
        (1.0 / (2.0 * mu)) ** ((r - 1.0) / (r - 3.0))
        * ((r - 3.0) / (r - 1.0))
        * (c / (beta * (r - 1.0))) ** (2.0 / (r - 3.0))
    )


def compute_thresholds(params: PhysicalParams | None = None, lambda1: float | None = None, **raw) -> UniquenessReport:
    """Uniqueness thresholds and decay margins.

    Either pass ``params`` or the raw keywords ``mu, alpha, beta, gamma, r, q``
    (the raw form allows ``alpha = 0``).  ``lambda1`` defaults to the box value.
    Out-of-domain quantities (``zeta``/``eta`` for ``r <= 3``; ``kappa`` unless
    ``r = 3`` and ``q < 3``) are ``None``.  At ``q = 1`` factors of the form
    ``0**0`` evaluate to 1.
    """
    if params is not None:
        mu, alpha, beta, gamma, r, q = params.mu, params.alpha, params.beta, params.gamma, params.r, params.q
        lam = params.lambda1 if lambda1 is None else lambda1
    else:
        try:
            mu, alpha, beta, gamma, r, q = (float(raw[k]) for k in ("mu", "alpha", "beta", "gamma", "r", "q"))
        except KeyError as exc:
            raise TypeError(f"missing parameter {exc.args[0]!r}") from None
        if lambda1 is None:
            raise TypeError("lambda1 is required with raw parameters")
        lam = float(lambda1)
        if mu <= 0:
            raise ValueError("mu must be positive")
        if alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if q < 1:
            raise ValueError("q must be >= 1")
    if not beta > 0:
        raise ValueError("thresholds need beta > 0")
    if not r > q:
        raise ValueError(f"r must exceed q (got r={r}, q={q})")

    zeta = eta = kappa = zeta0 = None
    if r > 3:
        pump = _pump_term(gamma, q, beta, r)
        zeta = 2.0 * (_absorb_term(mu, beta, r, 8.0) + pump)
        eta = beta / 4.0 + pump
        zeta0 = 2.0 * _absorb_term(mu, beta, r, 4.0)
    if r == 3 and q < 3:
        kappa = (
            (abs(gamma) * q * 2.0 ** (q - 2.0)) ** (2.0 / (3.0 - q))
            * ((3.0 - q) / 2.0)
            * ((q - 1.0) / beta) ** ((q - 1.0) / 2.0)
            * (1.0 + 2.0 ** ((q - 1.0) / 2.0))
        )

    L = mu * lam + 2.0 * alpha - zeta if zeta is not None else None
    L1 = 2.0 * ((mu - 1.0 / beta) * lam + alpha - eta) if eta is not None else None
    Lt = alpha + (mu - 1.0 / beta) * lam - kappa if kappa is not None else None
    cond_a = L is not None and L > 0
    cond_b = L1 is not None and L1 > 0 and beta * mu > 1
    cond_c = Lt is not None and Lt > 0 and beta * mu > 1
    # L-tilde bounds the H-norm, so the squared-norm rate is twice it
    rates = [x for x, ok in ((L, cond_a), (L1, cond_b), (2.0 * Lt if Lt is not None else None, cond_c)) if ok]
    return UniquenessReport(
        zeta=zeta,
        eta=eta,
        kappa=kappa,
        zeta_gamma0=zeta0,
        L=L,
        L1=L1,
        Ltilde=Lt,
        condition_supercritical_A=cond_a,
        condition_supercritical_B=cond_b,
        condition_critical=cond_c,
        applicable_rate=max(rates) if rates else None,
        lambda1=lam,
    )


def absorption_constant(params: PhysicalParams) -> float:
    """``((r-q)/(r+1)) (2(q+1)/(beta(r+1)))^((r-q)/(q+1))``."""
    p = params
    if not p.beta > 0:
        raise ValueError("the absorption constant needs beta > 0")
    return ((p.r - p.q) / (p.r + 1.0)) * (2.0 * (p.q + 1.0) / (p.beta * (p.r + 1.0))) ** ((p.r - p.q) / (p.q + 1.0))


def forcing_dual_sq_coeffs(f: ForcingSpec, grid) -> tuple[np.ndarray, np.ndarray]:
    """Trig-polynomial coefficients of ``t -> ||f(t)||_{V'}^2``.

    Returns ``(j, c)`` with ``||f(t)||^2 = sum_j c_j e^{i j Omega t}``.
    """
    if f.is_zero:
        return np.zeros(1, dtype=int), np.zeros(1, dtype=complex)
    ops = grid_ops(grid)
    hs, F = f.harmonics(grid)
    H = len(hs) // 2
    flat = F.reshape(len(hs), -1)
    w = np.broadcast_to(ops.inv_k2, F.shape[1:]).reshape(-1)
    gram = grid.volume * (flat * w) @ flat.conj().T  # gram[a, b] = <F_a, F_b>_{V'}
    js = np.arange(-2 * H, 2 * H + 1)
    c = np.array([np.trace(gram, offset=-j) for j in js])  # sums over h_a - h_b = j
    return js, c


def forcing_dual_sq_integral(f: ForcingSpec, grid, weight_rate: float = 0.0) -> float:
    """``int_0^T e^{-w (T - t)} ||f(t)||_{V'}^2 dt`` in closed form."""
    js, c = forcing_dual_sq_coeffs(f, grid)
    T = f.period_T
    if weight_rate == 0.0:
        return float(np.real(c[js == 0].sum()) * T)
    omega = 2.0 * math.pi / T
    decay = -math.expm1(-weight_rate * T)
    return float(np.real(np.sum(c * decay / (weight_rate + 1j * js * omega))))


def _trapezoid_windows(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    return 0.5 * np.diff(t) * (y[1:] + y[:-1])


def energy_residual_series(traj: Trajectory, params: PhysicalParams, f: ForcingSpec | None = None) -> np.ndarray:
    """Per-window defect of the energy equality.

    ``res_i = |v(t_{i+1})|^2 - |v(t_i)|^2 + 2 int (mu|v|_V^2 + alpha|v|^2 +
    beta|v|_{r+1}^{r+1} + gamma|v|_{q+1}^{q+1} - <f, v>)`` over each sampling
    window, with trapezoidal quadrature.  The whole-period residual is the sum.
    ``f`` is accepted for interface symmetry; the pairing is read from the
    trajectory diagnostics.
    """
    d = traj.diagnostics
    needed = ("h_norm", "v_norm", "lr1_norm", "lq1_norm", "forcing_pairing")
    missing = [k for k in needed if k not in d or len(d[k]) != len(traj.times) or np.isnan(d[k]).any()]
    if missing:
        raise ValueError(f"trajectory lacks diagnostics: {', '.join(missing)}")
    p = params
    rate = (
        p.mu * d["v_norm"] ** 2
        + p.alpha * d["h_norm"] ** 2
        + p.beta * d["lr1_norm"] ** (p.r + 1.0)
        + p.gamma * d["lq1_norm"] ** (p.q + 1.0)
        - d["forcing_pairing"]
    )
    return np.diff(d["h_norm"] ** 2) + 2.0 * _trapezoid_windows(traj.times, rate)


@dataclass(frozen=True)
class AprioriCheck:
    K: float
    sup_bound: float
    sup_energy: float
    satisfied: bool
    margin: float
    period_dissipation: float
    period_dissipation_ok: bool
    running_bound_max: float
    running_bound_ok: bool


def _cumtrapz(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(_trapezoid_windows(t, y))])


def apriori_bound_check(traj: Trajectory, params: PhysicalParams, f: ForcingSpec, rtol: float = 1e-9) -> AprioriCheck:
    """Check the a-priori bounds on one period of a periodic orbit.

    Three checks are made, all against ``K = 2 c0 |Omega| T + (1/mu) int
    ||f||_{V'}^2``:

    * ``sup_t |v|^2 <= (1/(mu lambda1 T) + 1) K`` (``satisfied``);
    * ``mu int |v|_V^2 + 2 alpha int |v|^2 + beta int |v|_{r+1}^{r+1} <= K``
      over the period;
    * for every sampled ``t``, ``|v(t)|^2 + mu int_0^t |v|_V^2 + 2 alpha int_0^t
      |v|^2 + 2 beta int_0^t |v|_{r+1}^{r+1} <= (1/(mu lambda1 T) + 1) K``.
    """
    p = params
    if not p.beta > 0:
        raise ValueError("a-priori bound needs beta > 0")
    T = p.period_T
    K = 2.0 * absorption_constant(p) * traj.grid.volume * T + forcing_dual_sq_integral(f, traj.grid) / p.mu
    bound = (1.0 / (p.mu * p.lambda1 * T) + 1.0) * K
    d = traj.diagnostics
    mask = traj.times <= traj.times[0] + T * (1 + 1e-12)
    t = traj.times[mask]
    h2 = d["h_norm"][mask] ** 2
    v2 = d["v_norm"][mask] ** 2
    lr = d["lr1_norm"][mask] ** (p.r + 1.0)
    sup = float(h2.max()) if len(h2) else 0.0
    visc, damp, absorb = _cumtrapz(t, v2), _cumtrapz(t, h2), _cumtrapz(t, lr)
    period = float(p.mu * visc[-1] + 2 * p.alpha * damp[-1] + p.beta * absorb[-1])
    running = h2 + p.mu * visc + 2 * p.alpha * damp + 2 * p.beta * absorb
    tol = 1 + rtol
    return AprioriCheck(
        K=K,
        sup_bound=bound,
        sup_energy=sup,
        satisfied=sup <= bound * tol,
        margin=bound - sup,
        period_dissipation=period,
        period_dissipation_ok=period <= K * tol,
        running_bound_max=float(running.max()),
        running_bound_ok=float(running.max()) <= bound * tol,
    )


@dataclass(frozen=True)
class DecayFit:
    rate: float
    r_squared: float
    n_points: int
    window: tuple[float, float]


def decay_rate_fit(traj_a: Trajectory, traj_b: Trajectory, floor: float = 1e-12) -> DecayFit:
    """Exponential decay rate of ``||v_a - v_b||_H^2`` by least squares on its log."""
    if traj_a.grid != traj_b.grid or traj_a.params != traj_b.params:
        raise ValueError("trajectories must share parameters and grid")
    if len(traj_a.state_times) != len(traj_b.state_times) or not np.allclose(traj_a.state_times, traj_b.state_times):
        raise ValueError("trajectories must share the state time grid")
    vol = traj_a.grid.volume
    diff = traj_a.states - traj_b.states
    energy = vol * np.sum(np.abs(diff.reshape(len(diff), -1)) ** 2, axis=1)
    keep = energy > floor
    if keep.sum() < 2 or not keep[0]:
        raise ValueError("indistinguishable trajectories")
    # leading window above the floor
    stop = int(np.argmin(keep)) if not keep.all() else len(keep)
    t = traj_a.state_times[:stop]
    y = np.log(energy[:stop])
    if len(t) < 2:
        raise ValueError("indistinguishable trajectories")
    slope, icpt = np.polyfit(t, y, 1)
    fit = slope * t + icpt
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(rate=float(-slope), r_squared=r2, n_points=len(t), window=(float(t[0]), float(t[-1])))
