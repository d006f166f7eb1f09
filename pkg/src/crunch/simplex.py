"""Dense bounded-variable primal simplex.

Solves ``min c.x  s.t.  A x <= b,  0 <= x <= u`` (``u`` may hold ``inf``).
Nonbasic variables sit at either bound, so the box constraints never become
rows. Phase I minimises the sum of artificials; Bland's rule prevents
cycling. Intended for the small instances produced per path (tens of
variables), where recomputing the basis solve each pivot is cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL = 1e-9


class LpNumericalError(RuntimeError):
    """The solver hit a singular basis, an unbounded ray or its pivot cap."""


@dataclass
class LpResult:
    status: str  # "optimal" | "infeasible"
    x: np.ndarray | None
    objective: float | None
    iterations: int


def _iterate(cost, A, b, ub, basis, at_upper, max_iter):
    m, ncol = A.shape
    is_basic = np.zeros(ncol, dtype=bool)
    is_basic[basis] = True
    for it in range(max_iter):
        B = A[:, basis]
        xn = np.where(at_upper & ~is_basic, ub, 0.0)
        xn[is_basic] = 0.0
        try:
            xb = np.linalg.solve(B, b - A @ xn)
            y = np.linalg.solve(B.T, cost[basis])
        except np.linalg.LinAlgError as exc:
            raise LpNumericalError("singular basis") from exc
        d = cost - y @ A
        enter = -1
        direction = 0
        for j in range(ncol):
            if is_basic[j] or ub[j] <= 0:
                continue
            if not at_upper[j] and d[j] < -TOL:
                enter, direction = j, 1
                break
            if at_upper[j] and d[j] > TOL:
                enter, direction = j, -1
                break
        if enter < 0:
            x = xn
            x[basis] = xb
            return x, it
        alpha = np.linalg.solve(B, A[:, enter])
        rate = -direction * alpha  # d x_B / d t
        step = ub[enter]
        leave_pos = -1
        leave_upper = False
        for i in range(m):
            r = rate[i]
            var = basis[i]
            if r < -TOL:
                t = max(xb[i], 0.0) / -r
                hits_upper = False
            elif r > TOL and np.isfinite(ub[var]):
                t = max(ub[var] - xb[i], 0.0) / r
                hits_upper = True
            else:
                continue
            if t < step - TOL or (t <= step + TOL and leave_pos >= 0 and var < basis[leave_pos]):
                step, leave_pos, leave_upper = t, i, hits_upper
        if not np.isfinite(step):
            raise LpNumericalError("unbounded direction")
        if leave_pos < 0:
            at_upper[enter] = not at_upper[enter]
            continue
        out = basis[leave_pos]
        is_basic[out] = False
        at_upper[out] = leave_upper
        basis[leave_pos] = enter
        is_basic[enter] = True
        at_upper[enter] = False
    raise LpNumericalError(f"no convergence within {max_iter} pivots")


def solve_bounded(c, A, b, upper, max_iter: int = 5000) -> LpResult:
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(-1, len(c))
    b = np.asarray(b, dtype=float)
    upper = np.asarray(upper, dtype=float)
    m, n = A.shape
    if np.any(upper < 0):
        return LpResult("infeasible", None, None, 0)
    neg = b < 0
    n_art = int(neg.sum())
    ncol = n + m + n_art
    T = np.zeros((m, ncol))
    rhs = b.copy()
    sign = np.where(neg, -1.0, 1.0)
    T[:, :n] = A * sign[:, None]
    T[np.arange(m), n + np.arange(m)] = sign
    rhs = rhs * sign
    basis = np.empty(m, dtype=int)
    art_cols = []
    k = 0
    for i in range(m):
        if neg[i]:
            col = n + m + k
            T[i, col] = 1.0
            basis[i] = col
            art_cols.append(col)
            k += 1
        else:
            basis[i] = n + i
    ub = np.concatenate([upper, np.full(m + n_art, np.inf)])
    at_upper = np.zeros(ncol, dtype=bool)
    iters = 0
    if n_art:
        phase1 = np.zeros(ncol)
        phase1[art_cols] = 1.0
        x, iters = _iterate(phase1, T, rhs, ub, basis, at_upper, max_iter)
        infeas = float(x[art_cols].sum())
        if infeas > 1e-7 * max(1.0, float(np.abs(rhs).max())):
            return LpResult("infeasible", None, None, iters)
        ub[art_cols] = 0.0
    cost = np.concatenate([c, np.zeros(m + n_art)])
    x, more = _iterate(cost, T, rhs, ub, basis, at_upper, max_iter)
    xs = np.clip(x[:n], 0.0, upper)
    return LpResult("optimal", xs, float(c @ xs), iters + more)
