"""Low-rank matrix machinery: adaptive cross approximation with on-demand
entry evaluation, and SVD recompression of the cross factors.

The cross representation kept here is the residual-skeleton form

    A_k = E_J * diag(D) * E_I

where column l of E_J is the l-th residual column, row l of E_I is the l-th
residual row, and D[l] is the reciprocal of the l-th pivot residual.  Factors
are stored compactly over the declared pivot-search window and read as zero
outside it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

_PIVOT_FLOOR = 1e-14


class RankCapWarning(UserWarning):
    """Raised (as a warning) when ACA hits its rank cap before converging."""


@dataclass(frozen=True)
class SvdFactors:
    """Truncated SVD triple U * diag(sigma) * V^T with orthonormal columns."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return (self.U.shape[0], self.V.shape[0])

    @property
    def rank(self) -> int:
        return self.sigma.size

    def entry(self, i: int, j: int) -> float:
        return float((self.U[i] * self.sigma) @ self.V[j])

    def values_at(self, ii, jj) -> np.ndarray:
        """Entries at paired index arrays (vectorized gather)."""
        if self.rank == 0:
            return np.zeros(np.broadcast(ii, jj).shape)
        return np.einsum("...k,k,...k->...", self.U[ii], self.sigma, self.V[jj])

    def row_segment(self, i: int, j0: int, j1: int) -> np.ndarray:
        """Contiguous slice [j0, j1) of row i."""
        if self.rank == 0:
            return np.zeros(j1 - j0)
        return self.V[j0:j1] @ (self.U[i] * self.sigma)

    def materialize(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T

    def scaled(self, c: float) -> "SvdFactors":
        return SvdFactors(self.U, c * self.sigma, self.V)

    @staticmethod
    def zeros(nx: int, ny: int) -> "SvdFactors":
        return SvdFactors(np.zeros((nx, 0)), np.zeros(0), np.zeros((ny, 0)))

    @staticmethod
    def from_outer_products(xs, ys, rel_cut: float = 1e-14) -> "SvdFactors":
        """Compress sum_k outer(xs[k], ys[k]) into orthonormal SVD form."""
        X = np.column_stack([np.asarray(x, dtype=float) for x in xs])
        Y = np.column_stack([np.asarray(y, dtype=float) for y in ys])
        if X.shape[1] != Y.shape[1]:
            raise ValueError("need matching term counts")
        Q1, R1 = np.linalg.qr(X)
        Q2, R2 = np.linalg.qr(Y)
        Us, s, Vts = np.linalg.svd(R1 @ R2.T)
        keep = s > (s[0] * rel_cut if s.size and s[0] > 0 else np.inf)
        return SvdFactors(Q1 @ Us[:, keep], s[keep], Q2 @ Vts.T[:, keep])

    @staticmethod
    def from_dense(A: np.ndarray, rel_cut: float = 1e-14) -> "SvdFactors":
        """Full SVD of a dense array, truncated relative to sigma_1."""
        A = np.asarray(A, dtype=float)
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
        keep = s > (s[0] * rel_cut if s.size and s[0] > 0 else np.inf)
        return SvdFactors(U[:, keep], s[keep], Vt.T[:, keep])


@dataclass(frozen=True)
class CrossFactors:
    """Residual-skeleton cross approximation over a window of a larger matrix.

    EJ is (window_rows, k), EI is (k, window_cols); rows/cols listed in
    `I`/`J` are global pivot indices.  Entries outside the window are zero.
    """

    EJ: np.ndarray
    D: np.ndarray
    EI: np.ndarray
    I: np.ndarray
    J: np.ndarray
    shape: tuple[int, int]
    row0: int = 0
    col0: int = 0

    @property
    def rank(self) -> int:
        return self.D.size

    @property
    def window_shape(self) -> tuple[int, int]:
        return (self.EJ.shape[0], self.EI.shape[1])

    def entry(self, i: int, j: int) -> float:
        iw, jw = i - self.row0, j - self.col0
        wx, wy = self.window_shape
        if not (0 <= iw < wx and 0 <= jw < wy) or self.rank == 0:
            return 0.0
        return float((self.EJ[iw] * self.D) @ self.EI[:, jw])

    def values_at(self, ii, jj) -> np.ndarray:
        ii = np.atleast_1d(np.asarray(ii))
        jj = np.atleast_1d(np.asarray(jj))
        ii, jj = np.broadcast_arrays(ii, jj)
        out = np.zeros(ii.shape)
        if self.rank == 0:
            return out
        wx, wy = self.window_shape
        iw, jw = ii - self.row0, jj - self.col0
        ok = (iw >= 0) & (iw < wx) & (jw >= 0) & (jw < wy)
        if np.any(ok):
            out[ok] = np.einsum(
                "mk,k,km->m", self.EJ[iw[ok]], self.D, self.EI[:, jw[ok]]
            )
        return out

    def row(self, i: int) -> np.ndarray:
        """Full row i over all columns of the parent shape."""
        out = np.zeros(self.shape[1])
        iw = i - self.row0
        if 0 <= iw < self.window_shape[0] and self.rank > 0:
            out[self.col0 : self.col0 + self.window_shape[1]] = (
                self.EJ[iw] * self.D
            ) @ self.EI
        return out

    def col(self, j: int) -> np.ndarray:
        out = np.zeros(self.shape[0])
        jw = j - self.col0
        if 0 <= jw < self.window_shape[1] and self.rank > 0:
            out[self.row0 : self.row0 + self.window_shape[0]] = self.EJ @ (
                self.D * self.EI[:, jw]
            )
        return out

    def materialize(self) -> np.ndarray:
        out = np.zeros(self.shape)
        if self.rank:
            wx, wy = self.window_shape
            out[self.row0 : self.row0 + wx, self.col0 : self.col0 + wy] = (
                self.EJ * self.D
            ) @ self.EI
        return out


class EntryOracle:
    """Deterministic lazily-evaluated matrix with a pivot-search window.

    `fn` maps paired integer index arrays (ii, jj) to entry values and must
    be vectorized.  `rows`/`cols` are half-open global ranges the pivot
    search is confined to; they default to the full shape.  Every evaluated
    entry is counted.
    """

    def __init__(self, shape, fn, rows=None, cols=None):
        self.shape = tuple(shape)
        self.fn = fn
        self.rows = (0, self.shape[0]) if rows is None else tuple(rows)
        self.cols = (0, self.shape[1]) if cols is None else tuple(cols)
        if not (0 <= self.rows[0] < self.rows[1] <= self.shape[0]):
            raise ValueError(f"bad row range {self.rows} for shape {self.shape}")
        if not (0 <= self.cols[0] < self.cols[1] <= self.shape[1]):
            raise ValueError(f"bad col range {self.cols} for shape {self.shape}")
        self.calls = 0

    def values_at(self, ii, jj) -> np.ndarray:
        ii = np.asarray(ii)
        self.calls += max(ii.size, np.asarray(jj).size)
        return np.asarray(self.fn(ii, jj), dtype=float)

    def entry(self, i: int, j: int) -> float:
        return float(self.values_at(np.array([i]), np.array([j]))[0])

    def col_values(self, j: int, ii) -> np.ndarray:
        ii = np.asarray(ii)
        return self.values_at(ii, np.full(ii.shape, j, dtype=np.int64))

    def row_values(self, i: int, jj) -> np.ndarray:
        jj = np.asarray(jj)
        return self.values_at(np.full(jj.shape, i, dtype=np.int64), jj)


def oracle_from_dense(A: np.ndarray, rows=None, cols=None) -> EntryOracle:
    A = np.asarray(A, dtype=float)
    return EntryOracle(A.shape, lambda ii, jj: A[ii, jj], rows=rows, cols=cols)


@dataclass
class AcaConfig:
    """Knobs for the greedy cross build.

    eps_c is the Frobenius-norm stop threshold on the candidate rank-1
    update; with relative=True it is scaled by the largest entry magnitude
    observed so far.
    """

    eps_c: float = 1e-4
    r_max: int = 256
    p: int = 5
    seed: int = 0
    relative: bool = False

    def __post_init__(self) -> None:
        if self.eps_c <= 0:
            raise ValueError(f"eps_c must be positive, got {self.eps_c}")
        if self.r_max < 1:
            raise ValueError(f"r_max must be >= 1, got {self.r_max}")
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")


def aca_build(oracle: EntryOracle, cfg: AcaConfig, rng=None) -> CrossFactors:
    """Greedy adaptive cross approximation with randomized pivot seeding.

    Each iteration draws p random candidate entries of the residual, walks
    the best one to a column argmax then a row argmax, and appends the
    resulting residual column/row pair.  The candidate update is rejected
    (and the build stopped) when its Frobenius norm falls below eps_c or the
    pivot residual is below 1e-14.  Ties in every argmax resolve to the
    smallest index, so a fixed rng makes the build deterministic.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    r0, r1 = oracle.rows
    c0, c1 = oracle.cols
    wx, wy = r1 - r0, c1 - c0
    r_cap = min(cfg.r_max, wx, wy)

    EJ = np.empty((wx, r_cap))
    EI = np.empty((r_cap, wy))
    D = np.empty(r_cap)
    piv_i = np.empty(r_cap, dtype=np.int64)
    piv_j = np.empty(r_cap, dtype=np.int64)
    k = 0
    row_used = np.zeros(wx, dtype=bool)
    col_used = np.zeros(wy, dtype=bool)
    all_rows = np.arange(r0, r1)
    all_cols = np.arange(c0, c1)
    max_seen = 0.0

    def residual_col(j: int) -> np.ndarray:
        nonlocal max_seen
        vals = oracle.col_values(j, all_rows)
        if cfg.relative:
            max_seen = max(max_seen, float(np.max(np.abs(vals))))
        if k:
            vals = vals - EJ[:, :k] @ (D[:k] * EI[:k, j - c0])
        return vals

    def residual_row(i: int) -> np.ndarray:
        nonlocal max_seen
        vals = oracle.row_values(i, all_cols)
        if cfg.relative:
            max_seen = max(max_seen, float(np.max(np.abs(vals))))
        if k:
            vals = vals - (EJ[i - r0, :k] * D[:k]) @ EI[:k]
        return vals

    def residual_entries(ii, jj) -> np.ndarray:
        nonlocal max_seen
        vals = oracle.values_at(ii, jj)
        if cfg.relative:
            max_seen = max(max_seen, float(np.max(np.abs(vals))))
        if k:
            vals = vals - np.einsum(
                "mk,k,km->m", EJ[ii - r0, :k], D[:k], EI[:k, jj - c0]
            )
        return vals

    while k < r_cap:
        avail_rows = all_rows[~row_used]
        avail_cols = all_cols[~col_used]

        # Random candidates seed the column choice; one fresh redraw is
        # allowed before an all-zero draw counts as convergence.
        j_seed = -1
        for _ in range(2):
            ii_c = avail_rows[rng.integers(0, avail_rows.size, cfg.p)]
            jj_c = avail_cols[rng.integers(0, avail_cols.size, cfg.p)]
            res_c = residual_entries(ii_c, jj_c)
            best = int(np.argmax(np.abs(res_c)))
            if abs(res_c[best]) >= _PIVOT_FLOOR:
                j_seed = int(jj_c[best])
                break
        if j_seed < 0:
            break

        col_seed = residual_col(j_seed)
        masked = np.abs(col_seed)
        masked[row_used] = -1.0
        i_k = r0 + int(np.argmax(masked))

        row_k = residual_row(i_k)
        masked = np.abs(row_k)
        masked[col_used] = -1.0
        j_k = c0 + int(np.argmax(masked))

        col_k = col_seed if j_k == j_seed else residual_col(j_k)
        pivot = float(row_k[j_k - c0])
        if abs(pivot) < _PIVOT_FLOOR:
            break
        thresh = cfg.eps_c * max_seen if cfg.relative else cfg.eps_c
        if np.linalg.norm(col_k) * np.linalg.norm(row_k) / abs(pivot) < thresh:
            break

        EJ[:, k] = col_k
        EI[k] = row_k
        D[k] = 1.0 / pivot
        piv_i[k] = i_k
        piv_j[k] = j_k
        row_used[i_k - r0] = True
        col_used[j_k - c0] = True
        k += 1

    if k == cfg.r_max:
        warnings.warn(
            f"cross build stopped at rank cap r_max={cfg.r_max} before converging",
            RankCapWarning,
            stacklevel=2,
        )
    return CrossFactors(
        EJ=EJ[:, :k].copy(),
        D=D[:k].copy(),
        EI=EI[:k].copy(),
        I=piv_i[:k].copy(),
        J=piv_j[:k].copy(),
        shape=oracle.shape,
        row0=r0,
        col0=c0,
    )


def svd_truncate(c: CrossFactors, eps_s: float) -> SvdFactors:
    """Recompress cross factors, keeping singular values > eps_s.

    QR-factorizes both skeleton factors so only a k-by-k dense SVD is ever
    taken; the returned U/V live on the full parent shape with zeros outside
    the cross window.
    """
    if eps_s <= 0:
        raise ValueError(f"eps_s must be positive, got {eps_s}")
    nx, ny = c.shape
    if c.rank == 0:
        return SvdFactors.zeros(nx, ny)
    Q1, R1 = np.linalg.qr(c.EJ)
    Q2, R2 = np.linalg.qr(c.EI.T)
    Us, s, Vts = np.linalg.svd(R1 @ (c.D[:, None] * R2.T))
    keep = int(np.count_nonzero(s > eps_s))
    U = np.zeros((nx, keep))
    V = np.zeros((ny, keep))
    U[c.row0 : c.row0 + c.window_shape[0]] = Q1 @ Us[:, :keep]
    V[c.col0 : c.col0 + c.window_shape[1]] = Q2 @ Vts[:keep].T
    return SvdFactors(U, s[:keep].copy(), V)
