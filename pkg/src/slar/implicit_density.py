"""Implicit conservative update of the charge-density equation.

The density obeys rho_t + (rho u)_x = 0 with a velocity taken from moment
predictions.  The flux rho*u is split as g+- = ((u +- alpha)/2) * rho with
alpha = max|u|, each part discretized by a one-sided third-order stencil, and
the resulting linear ODE system is integrated by a stiffly accurate
three-stage DIRK scheme whose stage systems are solved with restarted GMRES
under an incomplete-LU preconditioner.

Both difference matrices are circulant with zero row and column sums, so the
semi-discrete operator preserves constants and conserves the total density to
solver tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spilu

from .mesh import UniformGrid1D

# Root of x^3 - 3x^2 + (3/2)x - 1/6 in (1/6, 1/2) and the derived weights.
# Fixed to their 17-digit values so stage arithmetic is bit-stable.
_BETA = 0.43586652150845967
_TAU2 = (1.0 + _BETA) / 2.0
_B1 = -(6.0 * _BETA**2 - 16.0 * _BETA + 1.0) / 4.0
_B2 = (6.0 * _BETA**2 - 20.0 * _BETA + 5.0) / 4.0

SparseMatrix = sparse.csr_matrix  # CSR plumbing; scipy's layout is the contract


@dataclass(frozen=True)
class DirkTableau:
    """Stiffly accurate third-order DIRK coefficients."""

    beta: float = _BETA
    tau2: float = _TAU2
    b1: float = _B1
    b2: float = _B2

    def __post_init__(self) -> None:
        x = self.beta
        cubic = x**3 - 3 * x**2 + 1.5 * x - 1.0 / 6.0
        if abs(cubic) > 1e-14:
            raise ValueError(f"beta does not solve the stage cubic: residual {cubic!r}")
        if abs(self.b1 + self.b2 + self.beta - 1.0) > 1e-14:
            raise ValueError("weights do not sum to 1")

    @property
    def c(self) -> tuple[float, float, float]:
        return (self.beta, self.tau2, 1.0)

    @property
    def a(self) -> tuple[tuple[float, ...], ...]:
        return (
            (self.beta,),
            (self.tau2 - self.beta, self.beta),
            (self.b1, self.b2, self.beta),
        )


@dataclass(frozen=True)
class GmresConfig:
    tol: float = 1e-14
    restart: int = 30
    maxiter: int = 500
    ilu_droptol: float = 1e-6

    def __post_init__(self) -> None:
        if self.tol <= 0:
            raise ValueError(f"tolerance must be positive, got {self.tol}")
        if self.restart < 1 or self.maxiter < 1:
            raise ValueError("restart and maxiter must be at least 1")


def _circulant(n: int, offsets_coeffs, scale: float) -> SparseMatrix:
    rows, cols, vals = [], [], []
    idx = np.arange(n)
    for off, coeff in offsets_coeffs:
        rows.append(idx)
        cols.append(np.mod(idx + off, n))
        vals.append(np.full(n, coeff * scale))
    m = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return m.tocsr()


@dataclass(frozen=True)
class FluxSplitOperator:
    """Upwind difference matrices and the split speed for one velocity field."""

    Dp: SparseMatrix
    Dm: SparseMatrix
    alpha: float

    @classmethod
    def build(cls, u: np.ndarray, grid: UniformGrid1D) -> "FluxSplitOperator":
        Dp, Dm = upwind_matrices(grid)
        return cls(Dp=Dp, Dm=Dm, alpha=float(np.max(np.abs(u))))


def upwind_matrices(grid: UniformGrid1D) -> tuple[SparseMatrix, SparseMatrix]:
    """Left- and right-biased third-order divergence stencils, periodic."""
    s = 1.0 / grid.delta
    Dp = _circulant(grid.n, [(-2, 1 / 6), (-1, -1.0), (0, 0.5), (1, 1 / 3)], s)
    Dm = _circulant(grid.n, [(-1, -1 / 3), (0, -0.5), (1, 1.0), (2, -1 / 6)], s)
    return Dp, Dm


def apply_upwind_div(op: FluxSplitOperator, rho: np.ndarray, u: np.ndarray) -> np.ndarray:
    """D+ g+ + D- g- for the split fluxes of rho*u."""
    gp = 0.5 * (u + op.alpha) * rho
    gm = 0.5 * (u - op.alpha) * rho
    return op.Dp @ gp + op.Dm @ gm


def upwind_divergence_matrix(op: FluxSplitOperator, u: np.ndarray) -> SparseMatrix:
    """The same map as apply_upwind_div assembled as a matrix acting on rho."""
    dp = sparse.diags(0.5 * (u + op.alpha))
    dm = sparse.diags(0.5 * (u - op.alpha))
    return (op.Dp @ dp + op.Dm @ dm).tocsr()


def ilu_factor(A: SparseMatrix, droptol: float = 1e-6):
    """Incomplete LU of A; returns an object whose solve() applies (LU)^-1."""
    try:
        return spilu(sparse.csc_matrix(A), drop_tol=droptol)
    except RuntimeError as err:
        diag = A.diagonal()
        zeros = np.flatnonzero(diag == 0.0)
        where = f" (zero diagonal at row {zeros[0]})" if zeros.size else ""
        raise ValueError(f"incomplete factorization failed{where}: {err}") from err


class GmresError(RuntimeError):
    """Non-convergence; carries the residual history."""

    def __init__(self, message: str, residuals: list[float]):
        super().__init__(message)
        self.residuals = residuals


@dataclass
class GmresResult:
    x: np.ndarray
    iterations: int
    residual: float
    history: list[float] = field(default_factory=list)


def gmres_solve(A, b: np.ndarray, x0=None, pc=None, cfg: GmresConfig | None = None) -> GmresResult:
    """Restarted GMRES with right preconditioning.

    Right preconditioning keeps the minimized quantity equal to the true
    residual norm, so the convergence test needs no back-substitution.  pc is
    anything with a solve(vector) method (e.g. ilu_factor output) or None.
    """
    cfg = cfg or GmresConfig()
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return GmresResult(x=np.zeros(n), iterations=0, residual=0.0, history=[0.0])
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    apply_pc = (lambda v: v) if pc is None else pc.solve

    history: list[float] = []
    total_iters = 0
    while True:
        r = b - A @ x
        rnorm = float(np.linalg.norm(r))
        history.append(rnorm)
        if rnorm / bnorm <= cfg.tol:
            return GmresResult(x=x, iterations=total_iters, residual=rnorm / bnorm, history=history)
        if total_iters >= cfg.maxiter:
            raise GmresError(
                f"no convergence in {total_iters} iterations "
                f"(relative residual {rnorm / bnorm:.3e})",
                history,
            )

        m = cfg.restart
        V = np.zeros((n, m + 1))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        V[:, 0] = r / rnorm
        g[0] = rnorm
        k_used = 0
        for k in range(m):
            if total_iters >= cfg.maxiter:
                break
            w = A @ apply_pc(V[:, k])
            # modified Gram-Schmidt
            for i in range(k + 1):
                H[i, k] = float(V[:, i] @ w)
                w -= H[i, k] * V[:, i]
            H[k + 1, k] = float(np.linalg.norm(w))
            if H[k + 1, k] > 0.0:
                V[:, k + 1] = w / H[k + 1, k]
            # apply stored Givens rotations, then form the new one
            for i in range(k):
                t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = t
            denom = np.hypot(H[k, k], H[k + 1, k])
            if denom == 0.0:
                cs[k], sn[k] = 1.0, 0.0
            else:
                cs[k], sn[k] = H[k, k] / denom, H[k + 1, k] / denom
            H[k, k] = cs[k] * H[k, k] + sn[k] * H[k + 1, k]
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            total_iters += 1
            k_used = k + 1
            history.append(abs(float(g[k + 1])))
            if abs(g[k + 1]) / bnorm <= cfg.tol:
                break
        if k_used > 0:
            y = np.linalg.solve(np.triu(H[:k_used, :k_used]), g[:k_used])
            x = x + apply_pc(V[:, :k_used] @ y)


def _lagrange3(tm: float, t0: float, tp: float, ts: float) -> tuple[float, float, float]:
    wm = (ts - t0) * (ts - tp) / ((tm - t0) * (tm - tp))
    w0 = (ts - tm) * (ts - tp) / ((t0 - tm) * (t0 - tp))
    wp = (ts - tm) * (ts - t0) / ((tp - tm) * (tp - t0))
    return wm, w0, wp


def dirk3_density_step(
    rho_hist: tuple[np.ndarray, np.ndarray],
    u_hist: tuple[np.ndarray, np.ndarray],
    rho_pred: np.ndarray,
    u_pred: np.ndarray,
    dt: float,
    grid: UniformGrid1D,
    dt_prev: float | None = None,
    tableau: DirkTableau | None = None,
    cfg: GmresConfig | None = None,
    use_ilu: bool = True,
) -> tuple[np.ndarray, list[int]]:
    """One implicit step of rho_t + (rho u)_x = 0; returns (rho_new, iters).

    Stage velocities and initial guesses come from Lagrange interpolation in
    time through the previous, current, and predicted values.  dt_prev = None
    marks the first step, where no genuine history exists yet and the
    interpolation degenerates to the linear one through (t^n, t^n + dt).
    iters lists the GMRES iteration count per stage.
    """
    tab = tableau or DirkTableau()
    cfg = cfg or GmresConfig()
    rho_prev, rho_n = (np.asarray(v, dtype=float) for v in rho_hist)
    u_prev, u_n = (np.asarray(v, dtype=float) for v in u_hist)
    rho_pred = np.asarray(rho_pred, dtype=float)
    u_pred = np.asarray(u_pred, dtype=float)

    def at_stage(frac: float, ym, y0, yp):
        # frac in (0, 1]: position of the stage inside [t^n, t^n + dt]
        if dt_prev is None:
            return (1.0 - frac) * y0 + frac * yp
        wm, w0, wp = _lagrange3(-dt_prev, 0.0, dt, frac * dt)
        return wm * ym + w0 * y0 + wp * yp

    Dp, Dm = upwind_matrices(grid)
    ident = sparse.identity(grid.n, format="csr")
    a = tab.a
    stage_rhs_terms: list[np.ndarray] = []  # D^{u_s} rho_s per completed stage
    iters: list[int] = []
    rho_s = rho_n
    for s, c_s in enumerate(tab.c):
        u_s = at_stage(c_s, u_prev, u_n, u_pred)
        op = FluxSplitOperator(Dp=Dp, Dm=Dm, alpha=float(np.max(np.abs(u_s))))
        D_u = upwind_divergence_matrix(op, u_s)
        A = (ident + dt * tab.beta * D_u).tocsr()
        rhs = rho_n.copy()
        for sp in range(s):
            rhs -= dt * a[s][sp] * stage_rhs_terms[sp]
        guess = at_stage(c_s, rho_prev, rho_n, rho_pred)
        pc = ilu_factor(A, cfg.ilu_droptol) if use_ilu else None
        result = gmres_solve(A, rhs, x0=guess, pc=pc, cfg=cfg)
        rho_s = result.x
        iters.append(result.iterations)
        stage_rhs_terms.append(D_u @ rho_s)
    return rho_s, iters
