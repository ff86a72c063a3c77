import logging
from dataclasses import dataclass, field

import numpy as np

from config import ADMM_RHO, PROX_STEP_FRACTION, SOLVER_MAX_ITER, SOLVER_TOL
from core.errors import SolverError

logger = logging.getLogger(__name__)


def svd(A):  # A = U diag(s) Vt, s descending
    A = np.asarray(A, dtype=np.float64)
    if not np.isfinite(A).all():
        raise SolverError("svd of a matrix with non-finite entries")
    try:
        return np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as e:
        raise SolverError(f"svd did not converge: {e}") from None


def svt(A, tau):  # proximal operator of tau * nuclear norm
    if tau < 0:
        raise SolverError(f"singular value threshold must be >= 0, got {tau}")
    U, s, Vt = svd(A)
    return (U * np.maximum(s - tau, 0.0)) @ Vt


def nuclear_norm(A):
    return float(svd(A)[1].sum())


@dataclass
class NucNormProblem:
    X: np.ndarray  # only entries on Omega are read
    M: np.ndarray
    mode: str = "constrained"  # or "regularized"
    lam: float = None
    tol: float = SOLVER_TOL
    max_iter: int = SOLVER_MAX_ITER

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.M = np.asarray(self.M).astype(bool)
        if self.X.shape != self.M.shape or self.X.ndim != 2:
            raise SolverError(f"matrix shape {self.X.shape} does not match mask shape {self.M.shape}")
        if self.mode not in ("constrained", "regularized"):
            raise SolverError(f"unknown mode '{self.mode}'")
        if self.mode == "regularized":
            if not self.M.any():
                raise SolverError("regularized problem needs at least one observed entry")
            if self.lam is None or self.lam <= 0:
                raise SolverError(f"regularized problem needs lambda > 0, got {self.lam}")

    @property
    def observed(self):
        return np.where(self.M, self.X, 0.0)


@dataclass
class NucNormSolution:
    U: np.ndarray
    iterations: int
    objective: float
    residual: float  # max |U - X| on Omega (constrained) or last objective change (regularized)
    nuclear_norm: float
    converged: bool
    history: list = field(default_factory=list)


def solve_constrained(problem, rho=ADMM_RHO):  # min ||U||_* s.t. U = X on Omega, by ADMM on U = Z
    p = problem
    if p.M.all():
        return NucNormSolution(p.X.copy(), 0, nuclear_norm(p.X), 0.0, nuclear_norm(p.X), True)
    scale = max(1.0, float(np.linalg.norm(p.observed)))
    U = p.observed
    Z = U.copy()
    W = np.zeros_like(U)
    history = []
    converged = False
    it = 0
    for it in range(1, p.max_iter + 1):
        Z_prev = Z
        Z = svt(U + W, 1.0 / rho)
        U = np.where(p.M, p.X, Z - W)
        W += U - Z
        primal = np.linalg.norm(U - Z)
        dual = rho * np.linalg.norm(Z - Z_prev)
        history.append(nuclear_norm(U))
        if primal <= p.tol * scale and dual <= p.tol * scale:
            converged = True
            break
        if primal > 10 * dual:  # residual balancing
            rho *= 2.0
            W /= 2.0
        elif dual > 10 * primal:
            rho /= 2.0
            W *= 2.0
    if not converged:
        logger.warning("constrained solver stopped at the iteration cap (%d)", p.max_iter)
    residual = float(np.abs(U - p.X)[p.M].max()) if p.M.any() else 0.0
    value = nuclear_norm(U)
    return NucNormSolution(U, it, value, residual, value, converged, history)


def regularized_objective(U, problem):
    diff = (U - problem.X)[problem.M]
    return float(diff @ diff) / problem.M.sum() + problem.lam * nuclear_norm(U)


def solve_regularized(problem, step_fraction=PROX_STEP_FRACTION, start=None):  # proximal gradient, from P_Omega(X)
    p = problem
    count = int(p.M.sum())
    eta = step_fraction * count
    U = p.observed if start is None else np.array(start, dtype=np.float64)
    if U.shape != p.X.shape:
        raise SolverError(f"start shape {U.shape} does not match matrix shape {p.X.shape}")
    f = regularized_objective(U, p)
    history = [f]
    converged = False
    change = np.inf
    it = 0
    for it in range(1, p.max_iter + 1):
        grad = 2.0 / count * np.where(p.M, U - p.X, 0.0)
        U = svt(U - eta * grad, eta * p.lam)
        f_new = regularized_objective(U, p)
        change = abs(f - f_new)
        history.append(f_new)
        if change <= p.tol * max(1.0, abs(f)):
            f = f_new
            converged = True
            break
        f = f_new
    if not converged:
        logger.warning("regularized solver stopped at the iteration cap (%d)", p.max_iter)
    return NucNormSolution(U, it, f, float(change), nuclear_norm(U), converged, history)


def solve(problem):
    if problem.mode == "constrained":
        return solve_constrained(problem)
    return solve_regularized(problem)


def single_entry_oracle(X, M, low=-10.0, high=10.0, step=1e-3):  # (value, nuclear norm) by 1-D grid search
    """Minimize the nuclear norm over the one missing entry of X, first on a grid then on a finer one."""
    missing = np.argwhere(~np.asarray(M).astype(bool))
    if len(missing) != 1:
        raise SolverError(f"grid oracle needs exactly one missing entry, got {len(missing)}")
    i, j = missing[0]

    def norms(grid):
        stack = np.repeat(np.asarray(X, dtype=np.float64)[None], len(grid), axis=0)
        stack[:, i, j] = grid
        return np.linalg.svd(stack, compute_uv=False).sum(axis=1)

    coarse = np.arange(low, high + step / 2, step)
    best = coarse[np.argmin(norms(coarse))]
    fine = best + np.linspace(-step, step, 2001)
    values = norms(fine)
    return float(fine[np.argmin(values)]), float(values.min())
