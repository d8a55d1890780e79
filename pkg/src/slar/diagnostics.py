"""Run recording, error norms, and decay/growth rate fitting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .mesh import PhaseGrid

CSV_HEADER = "t,rank_cross,rank_svd,oracle_calls,E_l2,mass_rel_dev,momentum_dev,energy_rel_dev"


@dataclass
class RunDiagnostics:
    """Per-step time series of a run; deviations are relative to the t=0 row.

    The first recorded row always reports deviation 0 by construction, and a
    zero baseline makes the relative deviation 0 rather than dividing by it.
    """

    t: list[float] = field(default_factory=list)
    rank_cross: list[int] = field(default_factory=list)
    rank_svd: list[int] = field(default_factory=list)
    oracle_calls: list[int] = field(default_factory=list)
    E_l2: list[float] = field(default_factory=list)
    mass: list[float] = field(default_factory=list)
    momentum: list[float] = field(default_factory=list)
    energy: list[float] = field(default_factory=list)

    def record(self, t: float, rank_cross: int, rank_svd: int, oracle_calls: int,
               E_l2: float, mass: float, momentum: float, energy: float) -> None:
        self.t.append(float(t))
        self.rank_cross.append(int(rank_cross))
        self.rank_svd.append(int(rank_svd))
        self.oracle_calls.append(int(oracle_calls))
        self.E_l2.append(float(E_l2))
        self.mass.append(float(mass))
        self.momentum.append(float(momentum))
        self.energy.append(float(energy))

    @staticmethod
    def _rel_dev(series: list[float]) -> np.ndarray:
        s = np.asarray(series, dtype=float)
        if s.size == 0:
            return s
        base = s[0]
        if base == 0.0:
            return np.abs(s - base)
        return np.abs(s - base) / abs(base)

    @staticmethod
    def _abs_dev(series: list[float]) -> np.ndarray:
        s = np.asarray(series, dtype=float)
        return np.abs(s - s[0]) if s.size else s

    def mass_rel_dev(self) -> np.ndarray:
        return self._rel_dev(self.mass)

    def momentum_dev(self) -> np.ndarray:
        return self._abs_dev(self.momentum)

    def energy_rel_dev(self) -> np.ndarray:
        return self._rel_dev(self.energy)

    def rows(self):
        mrd = self.mass_rel_dev()
        jd = self.momentum_dev()
        erd = self.energy_rel_dev()
        for i in range(len(self.t)):
            yield (self.t[i], self.rank_cross[i], self.rank_svd[i],
                   self.oracle_calls[i], self.E_l2[i], mrd[i], jd[i], erd[i])

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(CSV_HEADER + "\n")
            for row in self.rows():
                fh.write(",".join(
                    f"{v:d}" if isinstance(v, (int, np.integer)) else f"{v:.17g}"
                    for v in row) + "\n")


def error_norms(F, ref, grid: PhaseGrid) -> tuple[float, float]:
    """Cell-weighted L1 and max-norm error between F and a reference.

    Either argument may be a dense array of the grid shape or any object
    with a materialize() method producing one.
    """
    def dense(obj):
        a = obj.materialize() if hasattr(obj, "materialize") else np.asarray(obj, dtype=float)
        if a.shape != grid.shape:
            raise ValueError(f"shape {a.shape} does not match grid {grid.shape}")
        return a

    d = np.abs(dense(F) - dense(ref))
    return float(grid.cell_area * d.sum()), float(d.max())


def field_peaks(e_series, min_separation: int = 3) -> np.ndarray:
    """Indices of strict local maxima of log ||E||, at least min_separation apart."""
    e = np.asarray(e_series, dtype=float)
    if np.any(e <= 0.0):
        raise ValueError("field norms must be positive to take logs")
    idx, _ = find_peaks(np.log(e), distance=min_separation)
    return idx


def fit_rate(t, e_series, peak_indices) -> float:
    """Least-squares slope of log ||E|| over the selected samples."""
    sel = np.asarray(peak_indices, dtype=np.int64)
    if sel.size < 2:
        raise ValueError(f"need at least two samples to fit a rate, got {sel.size}")
    tt = np.asarray(t, dtype=float)[sel]
    le = np.log(np.asarray(e_series, dtype=float)[sel])
    A = np.column_stack([tt, np.ones(sel.size)])
    coef, *_ = np.linalg.lstsq(A, le, rcond=None)
    return float(coef[0])
