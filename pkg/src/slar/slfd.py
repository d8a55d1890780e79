"""Semi-Lagrangian finite-difference entry oracle.

A solution entry at t1 is obtained by tracing the characteristic through the
cell center backward to t0 with one third-order Runge-Kutta step, then
evaluating a quadratic reconstruction of the t0 data on the 3x3 stencil
around the foot's host cell.  All functions are vectorized over point
batches; scalars work too.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lowrank import EntryOracle
from .mesh import BoundaryRule, PhaseGrid, UniformGrid1D

_OFFSETS = (-1, 0, 1)


@dataclass(frozen=True)
class VelocityField:
    """Advecting field (a, b) = (dx/dt, dy/dt) with speed bounds."""

    a: Callable
    b: Callable
    amax: float
    bmax: float


def trace_back_rk3(field: VelocityField, x, y, t1: float, t0: float):
    """Trace characteristics from (x, y) at t1 to their feet at t0.

    One step of Kutta's third-order scheme with stages at t1, midpoint and
    t0 (weights 1/6, 2/3, 1/6); h = t0 - t1 is negative for backward use but
    nothing here assumes a sign, so the same routine traces forward.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    h = t0 - t1
    k1x = np.asarray(field.a(x, y, t1), dtype=float)
    k1y = np.asarray(field.b(x, y, t1), dtype=float)
    tm = t1 + 0.5 * h
    xm = x + 0.5 * h * k1x
    ym = y + 0.5 * h * k1y
    k2x = np.asarray(field.a(xm, ym, tm), dtype=float)
    k2y = np.asarray(field.b(xm, ym, tm), dtype=float)
    xe = x - h * k1x + 2.0 * h * k2x
    ye = y - h * k1y + 2.0 * h * k2y
    k3x = np.asarray(field.a(xe, ye, t0), dtype=float)
    k3y = np.asarray(field.b(xe, ye, t0), dtype=float)
    xs = x + h * (k1x + 4.0 * k2x + k3x) / 6.0
    ys = y + h * (k1y + 4.0 * k2y + k3y) / 6.0
    return xs, ys


def reconstruct_p2(stencil: np.ndarray, xi, eta):
    """Evaluate the biquadratic nodal reconstruction at (xi, eta).

    `stencil[..., 1+di, 1+dj]` holds the value at offset (di, dj) from the
    host cell; xi/eta are offsets from the host center in cell units.  Exact
    for polynomials spanned by {1, x, y, x^2, xy, y^2} sampled on the
    stencil.
    """
    s = np.asarray(stencil, dtype=float)
    f00 = s[..., 1, 1]
    a1 = f00
    a2 = 0.5 * (s[..., 2, 1] - s[..., 0, 1])
    a3 = 0.5 * (s[..., 1, 2] - s[..., 1, 0])
    a4 = -f00 + 0.5 * (s[..., 0, 1] + s[..., 2, 1])
    a5 = 0.25 * (s[..., 2, 2] + s[..., 0, 0] - s[..., 0, 2] - s[..., 2, 0])
    a6 = -f00 + 0.5 * (s[..., 1, 0] + s[..., 1, 2])
    return a1 + xi * (a2 + a4 * xi + a5 * eta) + eta * (a3 + a6 * eta)


def _host_and_offset(grid: UniformGrid1D, rule: BoundaryRule, pts: np.ndarray):
    """Host cell index and fractional offset from its center, per axis rule.

    Periodic axes wrap the coordinate first, so |offset| <= 1/2 up to
    rounding.  Zero-extended axes clamp the host cell into range, letting
    the offset exceed 1/2 when a foot leaves the domain.
    """
    if rule is BoundaryRule.PERIODIC:
        pts = grid.wrap(pts)
    host = grid.locate_unchecked(pts)
    offs = (pts - (grid.lo + (host + 0.5) * grid.delta)) / grid.delta
    return host, offs


def gather_stencil(src, pgrid: PhaseGrid, host_i, host_j) -> np.ndarray:
    """3x3 neighborhoods of `src` around host cells, boundary rules applied."""
    host_i = np.atleast_1d(host_i)
    host_j = np.atleast_1d(host_j)
    nx, ny = pgrid.shape
    out = np.empty(host_i.shape + (3, 3))
    for di in _OFFSETS:
        qi = host_i + di
        if pgrid.bx is BoundaryRule.PERIODIC:
            qi, mask_i = np.mod(qi, nx), None
        else:
            mask_i = (qi >= 0) & (qi < nx)
            qi = np.clip(qi, 0, nx - 1)
        for dj in _OFFSETS:
            qj = host_j + dj
            if pgrid.by is BoundaryRule.PERIODIC:
                qj, mask_j = np.mod(qj, ny), None
            else:
                mask_j = (qj >= 0) & (qj < ny)
                qj = np.clip(qj, 0, ny - 1)
            vals = src.values_at(qi, qj)
            if mask_i is not None:
                vals = np.where(mask_i, vals, 0.0)
            if mask_j is not None:
                vals = np.where(mask_j, vals, 0.0)
            out[..., 1 + di, 1 + dj] = vals
    return out


def sl_values(src, pgrid: PhaseGrid, field: VelocityField, t0: float, t1: float, ii, jj):
    """Semi-Lagrangian update values at cell-index pairs (vectorized)."""
    ii = np.atleast_1d(np.asarray(ii, dtype=np.int64))
    jj = np.atleast_1d(np.asarray(jj, dtype=np.int64))
    x = pgrid.gx.centers[ii]
    y = pgrid.gy.centers[jj]
    xs, ys = trace_back_rk3(field, x, y, t1, t0)
    host_i, xi = _host_and_offset(pgrid.gx, pgrid.bx, xs)
    host_j, eta = _host_and_offset(pgrid.gy, pgrid.by, ys)
    stencil = gather_stencil(src, pgrid, host_i, host_j)
    return reconstruct_p2(stencil, xi, eta)


def sl_entry(src, pgrid: PhaseGrid, field: VelocityField, t0: float, t1: float, i: int, j: int) -> float:
    return float(sl_values(src, pgrid, field, t0, t1, i, j)[0])


def make_sl_oracle(src, pgrid: PhaseGrid, field: VelocityField, t0: float, t1: float,
                   rows=None, cols=None) -> EntryOracle:
    """Wrap the semi-Lagrangian update of `src` as a lazy entry oracle."""
    return EntryOracle(
        pgrid.shape,
        lambda ii, jj: sl_values(src, pgrid, field, t0, t1, ii, jj),
        rows=rows,
        cols=cols,
    )
