"""Uniform cell-centered grids and CFL time-step selection.

Cells are indexed 0..n-1; cell i spans [lo + i*delta, lo + (i+1)*delta] and
its center sits at lo + (i + 1/2)*delta.  Index sets written to files are
converted to 1-based there, not here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np


class BoundaryRule(Enum):
    """How a coordinate axis treats data beyond the domain ends."""

    PERIODIC = "periodic"
    ZERO = "zero"


@dataclass(frozen=True)
class UniformGrid1D:
    """Uniform 1-D mesh of n cells on [lo, hi]."""

    n: int
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"need at least one cell, got n={self.n}")
        if not self.hi > self.lo:
            raise ValueError(f"empty domain [{self.lo}, {self.hi}]")

    @property
    def delta(self) -> float:
        return (self.hi - self.lo) / self.n

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @cached_property
    def centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.n) + 0.5) * self.delta

    def _cell_fraction(self, x: np.ndarray) -> np.ndarray:
        # Feet that land on a cell face up to float rounding must resolve to
        # one host deterministically, or reruns and exact-tie steps (e.g. a
        # half-cell shift each step) mix neighbors and pollute the rank.
        s = (x - self.lo) / self.delta
        r = np.rint(s)
        return np.where(np.abs(s - r) <= 1e-9, r, s)

    def locate(self, x):
        """Host cell index for each coordinate, clamped into [0, n-1].

        Points may sit outside [lo, hi] by at most 1e-12*(hi-lo); anything
        farther out is rejected.  x = hi maps to the last cell.  Coordinates
        within 1e-9*delta of a face snap to it, so the face point itself is
        always the left edge of the host.
        """
        x = np.asarray(x, dtype=float)
        slack = 1e-12 * self.length
        if np.any(x < self.lo - slack) or np.any(x > self.hi + slack):
            bad = x[(x < self.lo - slack) | (x > self.hi + slack)]
            raise ValueError(
                f"coordinate {np.ravel(bad)[0]!r} outside [{self.lo}, {self.hi}]"
            )
        idx = np.floor(self._cell_fraction(x)).astype(np.int64)
        idx = np.clip(idx, 0, self.n - 1)
        return idx if idx.ndim else int(idx)

    def locate_unchecked(self, x):
        """Host cell with clamping only, for zero-extended axes where feet
        may legitimately leave the domain."""
        x = np.asarray(x, dtype=float)
        idx = np.floor(self._cell_fraction(x)).astype(np.int64)
        idx = np.clip(idx, 0, self.n - 1)
        return idx if idx.ndim else int(idx)

    def wrap(self, x):
        """Map coordinates into the principal period [lo, hi)."""
        return self.lo + np.mod(np.asarray(x, dtype=float) - self.lo, self.length)

    def wrap_index(self, i):
        """Periodic index wrap."""
        return np.mod(i, self.n)


@dataclass(frozen=True)
class PhaseGrid:
    """Tensor grid for a 2-D unknown, one boundary rule per axis."""

    gx: UniformGrid1D
    gy: UniformGrid1D
    bx: BoundaryRule = BoundaryRule.PERIODIC
    by: BoundaryRule = BoundaryRule.PERIODIC

    @property
    def shape(self) -> tuple[int, int]:
        return (self.gx.n, self.gy.n)

    @property
    def cell_area(self) -> float:
        return self.gx.delta * self.gy.delta


def time_step_from_cfl(cfl: float, amax: float, bmax: float, dx: float, dy: float) -> float:
    """dt = cfl / (amax/dx + bmax/dy).

    Raises ZeroDivisionError when both speed bounds vanish.
    """
    if cfl <= 0:
        raise ValueError(f"cfl must be positive, got {cfl}")
    if amax < 0 or bmax < 0:
        raise ValueError("speed bounds must be nonnegative")
    return float(cfl) / (float(amax) / dx + float(bmax) / dy)
