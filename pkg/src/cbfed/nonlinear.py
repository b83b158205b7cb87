"""
Convection and damping operators evaluated pseudo-spectrally on padded grids.

Quadratic products use a 3/2-padded grid, which together with the 2/3
truncation of retained modes makes the convective term and the cubic
quadrature behind ``b(u, v, w)`` alias-free.  The power nonlinearity
``|u|^(s-1) u`` is evaluated on a grid padded by ``power_padding_factor``;
for non-integer exponents this is a quadrature approximation.
"""

from __future__ import annotations

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .spectral import SpectralField, _GridOps, grid_ops, leray_coeffs

__all__ = [
    "NonlinearEvalConfig",
    "trilinear_form",
    "bilinear_map",
    "damping_map",
    "convection_coeffs",
    "power_coeffs",
]


class NonlinearEvalConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    padding_factor: float = Field(default=1.5, ge=1.5)
    power_padding_factor: float = Field(default=2.0, ge=1.0)


DEFAULT_EVAL = NonlinearEvalConfig()


def convection_values(u: np.ndarray, v: np.ndarray, ops: _GridOps, m: int) -> np.ndarray:
    """Physical values of ``(u . grad) v`` on the m-grid."""
    d = ops.dim
    # slot 0 holds u, slots 1..d hold d v_j / d x_i; one batched inverse FFT
    dv = np.expand_dims(v, -d - 2) * (1j * ops.k)[:, None]
    vals = ops.to_values(np.concatenate([np.expand_dims(u, -d - 2), dv], axis=-d - 2), m)
    tail = (slice(None),) * (d + 1)
    uvals = vals[(Ellipsis, 0) + tail]
    grad = vals[(Ellipsis, slice(1, None)) + tail]
    return np.sum(np.expand_dims(uvals, -d - 1) * grad, axis=-d - 2)


def convection_coeffs(u: np.ndarray, v: np.ndarray, ops: _GridOps, m: int) -> np.ndarray:
    """Leray-projected ``(u . grad) v`` on the n-grid (Nyquist cleared)."""
    conv = ops.from_values(convection_values(u, v, ops, m), m)
    return leray_coeffs(conv * ops.no_nyquist, ops)


def power_values(vals: np.ndarray, exponent: float, ops: _GridOps) -> tuple[np.ndarray, np.ndarray]:
    """``|u|^(s-1) u`` pointwise plus ``|u|`` (0 where ``u = 0``)."""
    mag = np.sqrt(np.sum(vals**2, axis=-ops.dim - 1))
    if exponent == 1.0:
        return vals, mag
    pos = mag > 0
    factor = np.zeros_like(mag)
    factor[pos] = mag[pos] ** (exponent - 1.0)
    return vals * np.expand_dims(factor, -ops.dim - 1), mag


def power_coeffs(u: np.ndarray, exponent: float, ops: _GridOps, m: int) -> np.ndarray:
    vals = ops.to_values(u, m)
    pv, _ = power_values(vals, exponent, ops)
    out = ops.from_values(pv, m) * ops.no_nyquist
    return leray_coeffs(out, ops)


def _check_same_grid(*fields: SpectralField) -> None:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise ValueError("fields live on different grids")


def trilinear_form(
    u: SpectralField, v: SpectralField, w: SpectralField, cfg: NonlinearEvalConfig = DEFAULT_EVAL
) -> float:
    """``b(u, v, w)``: quadrature of ``((u . grad) v) . w`` over the box."""
    _check_same_grid(u, v, w)
    ops = grid_ops(u.grid)
    m = ops.padded_size(cfg.padding_factor)
    conv = convection_values(u.coeffs, v.coeffs, ops, m)
    wv = ops.to_values(w.coeffs, m)
    return float(u.grid.volume * np.mean(np.sum(conv * wv, axis=0)))


def bilinear_map(u: SpectralField, v: SpectralField, cfg: NonlinearEvalConfig = DEFAULT_EVAL) -> SpectralField:
    """``B(u, v) = P[(u . grad) v]``."""
    _check_same_grid(u, v)
    if not u.solenoidal:
        raise ValueError("bilinear_map requires a divergence-free advecting field")
    ops = grid_ops(u.grid)
    m = ops.padded_size(cfg.padding_factor)
    return SpectralField(u.grid, convection_coeffs(u.coeffs, v.coeffs, ops, m), solenoidal=True)


def damping_map(u: SpectralField, exponent: float, cfg: NonlinearEvalConfig = DEFAULT_EVAL) -> SpectralField:
    """``P(|u|^(s-1) u)`` for ``s = exponent >= 1``.

    With ``s = r`` this is the absorption operator, with ``s = q`` the pumping
    operator.  Pairing the result with ``u`` reproduces the padded-grid
    quadrature of ``|u|^(s+1)`` exactly (discrete Parseval).
    """
    if not exponent >= 1.0:
        raise ValueError(f"exponent must be >= 1, got {exponent}")
    ops = grid_ops(u.grid)
    m = ops.padded_size(cfg.power_padding_factor)
    return SpectralField(u.grid, power_coeffs(u.coeffs, exponent, ops, m), solenoidal=True)
