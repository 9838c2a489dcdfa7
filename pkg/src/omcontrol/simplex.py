"""Dense two-phase revised simplex for equality-form LPs.

Solves  min c @ x  subject to  A @ x = b, x >= 0  with A dense and small
(tens of rows, up to ~1e5 columns).  Feasibility comes from a Phase-I with
artificial variables; redundant rows discovered there are dropped and get
zero duals.  Pricing is Dantzig's rule with smallest-index tie-breaks; a
degeneracy counter switches to Bland's rule after a configurable number of
pivots without objective progress, which guarantees termination, and
switches back once the objective moves again.  The basis system is
re-solved from scratch every pivot (cheap at these sizes, and it avoids
accumulated update error).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LpInfeasible, LpUnbounded, SolverStalled

_PROGRESS_TOL = 1e-12


@dataclass
class LpResult:
    x: np.ndarray        # primal solution over the structural columns
    duals: np.ndarray    # one dual per original row, in input row order
    value: float
    basis: np.ndarray    # structural column indices of the final basis
    pivots: int


def _iterate(A, b, c, basis, n_enterable, pivot_tol, stall_limit, max_pivots, pivots_done):
    """Run simplex pivots until optimality over the first n_enterable columns.

    ``basis`` is modified in place.  Returns (x_B, duals, pivots_done).
    """
    m = A.shape[0]
    use_bland = False
    stall = 0
    prev_obj = np.inf
    while True:
        B = A[:, basis]
        try:
            xB = np.linalg.solve(B, b)
            y = np.linalg.solve(B.T, c[basis])
        except np.linalg.LinAlgError:
            raise SolverStalled("singular working basis") from None
        obj = float(c[basis] @ xB)
        if obj < prev_obj - _PROGRESS_TOL * (1.0 + abs(prev_obj)):
            stall = 0
            use_bland = False
        else:
            stall += 1
            if stall >= stall_limit:
                use_bland = True
        prev_obj = obj

        rc = c[:n_enterable] - y @ A[:, :n_enterable]
        rc[basis[basis < n_enterable]] = 0.0  # basic columns never re-enter
        if use_bland:
            negative = np.nonzero(rc < -pivot_tol)[0]
            if negative.size == 0:
                return np.maximum(xB, 0.0), y, pivots_done
            j = int(negative[0])
        else:
            j = int(np.argmin(rc))
            if rc[j] >= -pivot_tol:
                return np.maximum(xB, 0.0), y, pivots_done

        d = np.linalg.solve(B, A[:, j])
        pos = d > pivot_tol
        if not pos.any():
            raise LpUnbounded("no blocking row for the entering column")
        ratios = np.full(m, np.inf)
        ratios[pos] = np.maximum(xB[pos], 0.0) / d[pos]
        theta = ratios.min()
        ties = np.nonzero(ratios <= theta + 1e-12 * (1.0 + theta))[0]
        leave = ties[np.argmin(basis[ties])]
        basis[leave] = j

        pivots_done += 1
        if pivots_done > max_pivots:
            raise SolverStalled(f"pivot budget {max_pivots} exhausted")


def solve_equality_lp(A, b, c, pivot_tol: float = 1e-9, stall_limit: int = 1000,
                      max_pivots: int = 200_000) -> LpResult:
    """Solve min c@x s.t. A@x = b, x >= 0 by the two-phase dense simplex."""
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    c = np.array(c, dtype=float)
    m, n = A.shape
    if b.shape != (m,) or c.shape != (n,):
        raise ValueError("inconsistent LP shapes")

    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    # Phase I over [A | I] with artificial costs.
    A1 = np.hstack([A, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = np.arange(n, n + m)
    xB, _, pivots = _iterate(A1, b, c1, basis, n, pivot_tol, stall_limit, max_pivots, 0)
    infeas = float(c1[basis] @ xB)
    if infeas > 1e-8 * (1.0 + float(np.abs(b).sum())):
        raise LpInfeasible(f"phase-I residual {infeas:.3e}")

    # Drive remaining artificials out of the basis; rows that cannot be
    # pivoted on are redundant and dropped (their duals are zero).
    keep_rows = np.ones(m, dtype=bool)
    for k in range(m):
        if basis[k] < n:
            continue
        B = A1[:, basis]
        u = np.linalg.solve(B.T, np.eye(m)[:, k])
        weights = u @ A  # row k of B^{-1} A over structural columns
        candidates = np.nonzero(np.abs(weights) > pivot_tol)[0]
        candidates = candidates[~np.isin(candidates, basis)]
        if candidates.size:
            basis[k] = int(candidates[0])
        else:
            keep_rows[k] = False

    if not keep_rows.all():
        rows = np.nonzero(keep_rows)[0]
        drop_positions = np.nonzero(~keep_rows)[0]
        basis = np.delete(basis, drop_positions)
        A = A[rows]
        b = b[rows]
        flip_kept = flip[rows]
    else:
        rows = np.arange(m)
        flip_kept = flip

    # Phase II on structural columns only.
    xB, y, pivots = _iterate(A, b, c, basis, n, pivot_tol, stall_limit, max_pivots, pivots)

    # One step of iterative refinement for the final basic solution.
    B = A[:, basis]
    xB = xB + np.linalg.solve(B, b - B @ xB)
    xB = np.maximum(xB, 0.0)

    x = np.zeros(n)
    x[basis] = xB
    duals = np.zeros(m)
    duals[rows] = np.where(flip_kept, -y, y)
    return LpResult(x=x, duals=duals, value=float(c @ x), basis=basis.copy(), pivots=pivots)
