"""Periodic 1-D electrostatic field solve.

The potential equation -phi'' = rho - rho0 is solved in Fourier space on the
uniform periodic grid: mode m gets phi_hat = rho_hat / k_m^2 and
E_hat = -i k_m phi_hat, with the zero mode of both pinned to 0.  The gauge is
mean(phi) = 0; E is gauge independent and comes back mean-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .mesh import BoundaryRule, UniformGrid1D


@dataclass(frozen=True)
class FieldState:
    """Charge density, its background, and the resulting field and potential."""

    rho: np.ndarray
    rho0: float
    E: np.ndarray
    phi: np.ndarray


def solve_poisson(
    rho: np.ndarray,
    grid: UniformGrid1D,
    rule: BoundaryRule = BoundaryRule.PERIODIC,
) -> FieldState:
    """Field state for the density rho on a periodic grid of >= 4 cells."""
    if rule is not BoundaryRule.PERIODIC:
        raise ValueError(f"field solve requires a periodic axis, got {rule}")
    if grid.n < 4:
        raise ValueError(f"need at least 4 cells for the transform, got {grid.n}")
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (grid.n,):
        raise ValueError(f"density shape {rho.shape} does not match grid n={grid.n}")

    rho0 = float(rho.mean())
    rho_hat = np.fft.rfft(rho - rho0)
    k = 2.0 * np.pi * np.fft.rfftfreq(grid.n, d=grid.delta)
    k[0] = 1.0  # zero mode handled explicitly below
    phi_hat = rho_hat / k**2
    phi_hat[0] = 0.0
    e_hat = -1j * k * phi_hat
    e_hat[0] = 0.0
    phi = np.fft.irfft(phi_hat, n=grid.n)
    E = np.fft.irfft(e_hat, n=grid.n)
    return FieldState(rho=rho, rho0=rho0, E=E, phi=phi)


def periodic_interpolant(grid: UniformGrid1D, values: np.ndarray):
    """Callable evaluating nodal data anywhere, with periodic wraparound.

    Characteristic feet rarely sit on nodes, so stage fields need an off-grid
    evaluator.  A cubic spline keeps the field smooth enough not to degrade
    the third-order trace.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.n,):
        raise ValueError(f"values shape {values.shape} does not match grid")
    c0 = grid.centers[0]
    nodes = np.concatenate([grid.centers, [c0 + grid.length]])
    data = np.concatenate([values, [values[0]]])
    spline = CubicSpline(nodes, data, bc_type="periodic")

    def evaluate(x):
        return spline(c0 + np.mod(np.asarray(x, dtype=float) - c0, grid.length))

    return evaluate
