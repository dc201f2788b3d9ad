"""Exact quadratic programming on the probability simplex.

Minimizes 0.5 w'Hw + c'w subject to sum(w) = 1, w >= 0 with a primal
active-set method: each outer step solves the equality-constrained
problem on the currently free coordinates through a bordered KKT system,
walks toward that minimizer until a bound blocks, and releases the most
negative bound multiplier once no progress remains.  A tiny ridge keeps
the reduced Hessians positive definite and a tiny index-proportional
cost perturbation makes the minimizer unique, preferring lower-index
coordinates among otherwise equivalent optima.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyInput, NonFinite, NumericalFailure

# Convergence certificate required to stop early.
KKT_TOL = 1e-10
# Residual allowed at the iteration cap before the solve is declared failed.
KKT_FAIL = 1e-9
MAX_ITERATIONS = 10_000
# Relative sizes of the convexity ridge and the tie-break perturbation.
RIDGE_EPS = 1e-12
TIE_EPS = 1e-12


@dataclass(frozen=True)
class SimplexSolution:
    """Optimal weights plus the certificate that they are optimal."""

    weights: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    active_bounds: tuple[int, ...]
    objective_path: tuple[float, ...]

    def __post_init__(self) -> None:
        self.weights.setflags(write=False)


def solve_simplex_qp(hessian: np.ndarray, linear: np.ndarray) -> SimplexSolution:
    """Minimize 0.5 w'Hw + c'w over the probability simplex.

    ``hessian`` must be symmetric positive semidefinite.  The reported
    objective and KKT residual refer to the given problem; the internal
    ridge and tie-break shifts are O(1e-12) relative to problem scale.
    """
    h0 = np.asarray(hessian, dtype=np.float64)
    c0 = np.asarray(linear, dtype=np.float64)
    if h0.ndim != 2 or h0.shape[0] != h0.shape[1]:
        raise ConfigError(f"hessian must be square, got shape {h0.shape}")
    n = h0.shape[0]
    if n == 0:
        raise EmptyInput("cannot optimize over an empty simplex")
    if c0.shape != (n,):
        raise ConfigError(f"linear term shape {c0.shape} does not match n={n}")
    if not (np.all(np.isfinite(h0)) and np.all(np.isfinite(c0))):
        raise NonFinite("hessian and linear term must be finite")
    if n == 1:
        w = np.array([1.0])
        obj = float(0.5 * h0[0, 0] + c0[0])
        return SimplexSolution(
            weights=w,
            objective=obj,
            kkt_residual=0.0,
            iterations=0,
            active_bounds=(),
            objective_path=(obj,),
        )

    scale = max(float(np.abs(np.diag(h0)).mean()), float(np.abs(c0).max()), 1.0)
    h = 0.5 * (h0 + h0.T) + RIDGE_EPS * scale * np.eye(n)
    c = c0 + TIE_EPS * scale * np.arange(n)

    def objective(w: np.ndarray) -> float:
        return float(0.5 * w @ h0 @ w + c0 @ w)

    w = np.full(n, 1.0 / n)
    at_bound = np.zeros(n, dtype=bool)
    path = [objective(w)]
    iterations = 0
    while iterations < MAX_ITERATIONS:
        iterations += 1
        free = np.flatnonzero(~at_bound)
        k = free.size
        # Equality-constrained minimizer on the free coordinates via the
        # bordered system [[H_FF, 1], [1', 0]] [w*; nu] = [-c_F; 1].
        kkt = np.zeros((k + 1, k + 1))
        kkt[:k, :k] = h[np.ix_(free, free)]
        kkt[:k, k] = 1.0
        kkt[k, :k] = 1.0
        rhs = np.concatenate([-c[free], [1.0]])
        sol = np.linalg.solve(kkt, rhs)
        target, nu = sol[:k], sol[k]
        direction = target - w[free]
        if float(np.abs(direction).max(initial=0.0)) <= 1e-14:
            # At the subproblem optimum; check the bound multipliers.
            grad = h @ w + c
            if at_bound.any():
                mu = grad[at_bound] + nu
                worst = float(mu.min())
                if worst < -KKT_TOL:
                    bound_idx = np.flatnonzero(at_bound)
                    release = bound_idx[int(np.argmin(mu))]
                    at_bound[release] = False
                    continue
            residual = _kkt_residual(h, c, w, nu, at_bound)
            if residual < KKT_TOL:
                return _finish(w, objective, residual, iterations, at_bound, path)
            break
        # Step toward the target until a free coordinate hits zero.
        alpha = 1.0
        blocker = -1
        for pos, j in enumerate(free):
            if direction[pos] < 0.0:
                limit = -w[j] / direction[pos]
                if limit < alpha - 1e-15:
                    alpha = limit
                    blocker = j
        w[free] = w[free] + alpha * direction
        if blocker >= 0:
            w[blocker] = 0.0
            at_bound[blocker] = True
        np.clip(w, 0.0, None, out=w)
        w /= w.sum()
        path.append(objective(w))
    grad = h @ w + c
    free = np.flatnonzero(~at_bound)
    nu = -float(grad[free].mean()) if free.size else 0.0
    residual = _kkt_residual(h, c, w, nu, at_bound)
    if residual >= KKT_FAIL:
        raise NumericalFailure(
            f"simplex QP stopped after {iterations} iterations with KKT "
            f"residual {residual:.3e}"
        )
    return _finish(w, objective, residual, iterations, at_bound, path)


def _kkt_residual(
    h: np.ndarray, c: np.ndarray, w: np.ndarray, nu: float, at_bound: np.ndarray
) -> float:
    """Worst violation of stationarity, feasibility, and dual signs."""
    grad = h @ w + c
    stationarity = grad + nu
    mu = np.where(at_bound, stationarity, 0.0)
    parts = [
        float(np.abs(np.where(at_bound, 0.0, stationarity)).max(initial=0.0)),
        float(np.maximum(-mu, 0.0).max(initial=0.0)),
        abs(float(w.sum()) - 1.0),
        float(np.maximum(-w, 0.0).max(initial=0.0)),
    ]
    return max(parts)


def _finish(w, objective, residual, iterations, at_bound, path) -> SimplexSolution:
    final = objective(w)
    if final < path[-1] - 1e-15:
        path.append(final)
    return SimplexSolution(
        weights=w.copy(),
        objective=final,
        kkt_residual=residual,
        iterations=iterations,
        active_bounds=tuple(int(j) for j in np.flatnonzero(at_bound)),
        objective_path=tuple(path),
    )


def least_squares_weights(
    targets: np.ndarray, donors: np.ndarray, v: np.ndarray | None = None
) -> SimplexSolution:
    """Simplex weights minimizing the V-weighted squared fit error.

    ``targets`` has one entry per predictor, ``donors`` one column per
    candidate unit, and ``v`` optional non-negative predictor weights
    (uniform when omitted).  The reported objective is the achieved
    weighted sum of squared errors.
    """
    b = np.asarray(targets, dtype=np.float64)
    a = np.asarray(donors, dtype=np.float64)
    if a.ndim != 2:
        raise ConfigError(f"donor matrix must be 2-d, got shape {a.shape}")
    k, n = a.shape
    if b.shape != (k,):
        raise ConfigError(f"target shape {b.shape} does not match {k} predictors")
    if k == 0:
        raise EmptyInput("need at least one predictor row")
    if v is None:
        v = np.full(k, 1.0 / k)
    else:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (k,):
            raise ConfigError(f"predictor weight shape {v.shape} does not match {k}")
        if np.any(v < 0):
            raise ConfigError("predictor weights must be non-negative")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(v))):
        raise NonFinite("least-squares inputs must be finite")
    va = v[:, None] * a
    h = 2.0 * a.T @ va
    c = -2.0 * b @ va
    const = float(b @ (v * b))
    sol = solve_simplex_qp(h, c)
    shifted = tuple(p + const for p in sol.objective_path)
    residual_vec = b - a @ sol.weights
    ssr = float(residual_vec @ (v * residual_vec))
    return SimplexSolution(
        weights=sol.weights.copy(),
        objective=ssr,
        kkt_residual=sol.kkt_residual,
        iterations=sol.iterations,
        active_bounds=sol.active_bounds,
        objective_path=shifted,
    )
