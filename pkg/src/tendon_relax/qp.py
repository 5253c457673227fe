"""Necessary muscle tension as a bound-constrained convex QP.

    minimize    x' W1 x + (G' x + tau)' W2 (G' x + tau)
    subject to  x >= t_min

The torque term is a soft version of ``tau = -G' x`` so that an imperfect
Jacobian never makes the problem infeasible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


class QpError(RuntimeError):
    """Active-set iteration cap exceeded; carries the best iterate."""

    def __init__(self, message, x=None, residual=float("nan")):
        super().__init__(message)
        self.x = x
        self.residual = residual


@dataclass(frozen=True)
class QpWeights:
    w1_scale: float = 1.0e-5
    w2_scale: float = 1.0

    def __post_init__(self):
        if not (self.w1_scale > 0.0 and self.w2_scale > 0.0):
            raise ValueError("QP weights must be strictly positive")


@dataclass(frozen=True, eq=False)
class QpProblem:
    G: np.ndarray
    tau_nec: np.ndarray
    weights: QpWeights = QpWeights()
    t_min: float = 30.0

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        tau = np.atleast_1d(np.asarray(self.tau_nec, dtype=float))
        if G.shape[1] != tau.shape[0]:
            raise ValueError(f"G is {G.shape} but tau_nec has {tau.shape[0]} entries")
        if not (np.all(np.isfinite(G)) and np.all(np.isfinite(tau))):
            raise ValueError("QP inputs must be finite")
        if not (self.t_min >= 0.0 and np.isfinite(self.t_min)):
            raise ValueError("t_min must be a finite non-negative number")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "tau_nec", tau)

    @property
    def n(self) -> int:
        return self.G.shape[0]

    def hessian(self) -> np.ndarray:
        w1, w2 = self.weights.w1_scale, self.weights.w2_scale
        return 2.0 * (w1 * np.eye(self.n) + w2 * (self.G @ self.G.T))

    def linear_term(self) -> np.ndarray:
        return 2.0 * self.weights.w2_scale * (self.G @ self.tau_nec)

    def gradient(self, x) -> np.ndarray:
        w1, w2 = self.weights.w1_scale, self.weights.w2_scale
        return 2.0 * w1 * x + 2.0 * w2 * (self.G @ (self.G.T @ x + self.tau_nec))

    def objective(self, x) -> float:
        w1, w2 = self.weights.w1_scale, self.weights.w2_scale
        r = self.G.T @ x + self.tau_nec
        return float(w1 * (x @ x) + w2 * (r @ r))


@dataclass(frozen=True, eq=False)
class QpSolution:
    x: np.ndarray
    objective_value: float
    kkt_residual: float
    iterations: int
    active_set: frozenset


def kkt_residual(problem: QpProblem, x, tol: float) -> float:
    g = problem.gradient(x)
    free = x > problem.t_min + tol
    viol = np.where(free, np.abs(g), np.maximum(-g, 0.0))
    viol = np.maximum(viol, np.maximum(problem.t_min - x, 0.0))
    return float(viol.max()) if viol.size else 0.0


def verify_kkt(problem: QpProblem, x, tol: float = 1e-8):
    """Check first-order optimality of ``x``; returns ``(ok, residual)``."""
    x = np.asarray(x, dtype=float)
    res = kkt_residual(problem, x, tol)
    return res <= tol, res


def solve_necessary_tension(problem: QpProblem, tol: float = 1e-9,
                            max_iter: int | None = None) -> QpSolution:
    """Primal active-set solve of the bound-constrained QP.

    Starts with every bound active at ``x = t_min``. Each iteration solves
    the equality problem on the free set; an infeasible step is shortened to
    the first blocking bound, otherwise the bound with the most negative
    multiplier is released. Ties go to the lowest muscle index.
    """
    n = problem.n
    lb = problem.t_min
    H = problem.hessian()
    c = problem.linear_term()
    max_iter = 10 * n if max_iter is None else max_iter

    x = np.full(n, lb)
    active = np.ones(n, dtype=bool)
    for it in range(1, max_iter + 1):
        free = ~active
        if free.any():
            idx = np.flatnonzero(free)
            rhs = -(c[free] + H[np.ix_(free, active)] @ x[active])
            target = np.linalg.solve(H[np.ix_(free, free)], rhs)
            step = target - x[free]
            alpha, block = 1.0, -1
            for k, i in enumerate(idx):
                if step[k] < 0.0:
                    a = (lb - x[i]) / step[k]
                    if a < alpha:
                        alpha, block = a, i
            if block >= 0:
                x[free] = np.maximum(x[free] + alpha * step, lb)
                x[block] = lb
                active[block] = True
                continue
            x[free] = np.maximum(target, lb)
        g = H @ x + c
        if active.any():
            lam = np.where(active, g, np.inf)
            j = int(np.argmin(lam))
            if lam[j] < -tol:
                active[j] = False
                continue
        res = kkt_residual(problem, x, tol)
        return QpSolution(x, problem.objective(x), res, it,
                          frozenset(np.flatnonzero(active).tolist()))
    res = kkt_residual(problem, x, tol)
    raise QpError(f"active-set did not converge in {max_iter} iterations "
                  f"(KKT residual {res:.3e})", x=x.copy(), residual=res)


@njit(cache=True)
def _projected_gradient(H, c, lb, iters, step_tol):
    n = H.shape[0]
    L = 0.0
    for i in range(n):
        row = 0.0
        for j in range(n):
            row += abs(H[i, j])
        if row > L:
            L = row
    x = np.full(n, lb)
    for _ in range(iters):
        g = H @ x + c
        moved = 0.0
        for i in range(n):
            xi = x[i] - g[i] / L
            if xi < lb:
                xi = lb
            d = abs(xi - x[i])
            if d > moved:
                moved = d
            x[i] = xi
        if moved <= step_tol * (1.0 + np.max(np.abs(x))):
            break
    return x


def oracle_solve(problem: QpProblem, iters: int = 200_000) -> np.ndarray:
    """Reference solution by projected gradient with a Gershgorin step 1/L.

    Shares nothing with the active-set path beyond the problem data; meant
    for verification only.
    """
    G = problem.G
    w1, w2 = problem.weights.w1_scale, problem.weights.w2_scale
    H = 2.0 * w1 * np.eye(G.shape[0]) + 2.0 * w2 * (G @ G.T)
    c = 2.0 * w2 * (G @ problem.tau_nec)
    return _projected_gradient(H, c, float(problem.t_min), int(iters), 1e-15)
