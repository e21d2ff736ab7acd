"""Dense two-phase revised simplex for desk-scale linear programs.

Solves  maximize c.x  subject to  A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0.
Designed for problems with few rows and many columns (the CCE programs have
~K rows and up to tens of thousands of orbit variables), so the basis stays
tiny and each iteration is one dense pricing pass. Bland's rule guarantees
termination under degeneracy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_PIVOT_TOL = 1e-9
_FEAS_TOL = 1e-9


class SimplexError(RuntimeError):
    pass


@dataclass
class LpResult:
    x: np.ndarray
    value: float
    status: str
    iterations: int


def _solve_phase(tableau_a, b, cost, basis, max_iter):
    """Revised simplex loop on equality-form data; mutates basis, returns x_B.

    Prices with Dantzig's rule and falls back to Bland's rule after a run of
    degenerate steps, which restores the termination guarantee.
    """
    m, n = tableau_a.shape
    iters = 0
    stall = 0
    last_value = -np.inf
    while True:
        iters += 1
        if iters > max_iter:
            raise SimplexError("iteration limit exceeded")
        b_mat = tableau_a[:, basis]
        try:
            x_b = np.linalg.solve(b_mat, b)
            y = np.linalg.solve(b_mat.T, cost[basis])
        except np.linalg.LinAlgError as exc:
            raise SimplexError("singular basis") from exc
        reduced = cost - y @ tableau_a
        reduced[basis] = 0.0
        candidates = np.flatnonzero(reduced > _PIVOT_TOL)
        if candidates.size == 0:
            return x_b, iters
        value = cost[basis] @ x_b
        stall = stall + 1 if value <= last_value + 1e-13 else 0
        last_value = max(last_value, value)
        if stall > 60:
            enter = int(candidates[0])  # Bland: lowest eligible index
        else:
            enter = int(candidates[np.argmax(reduced[candidates])])
        direction = np.linalg.solve(b_mat, tableau_a[:, enter])
        positive = direction > _PIVOT_TOL
        if not np.any(positive):
            raise SimplexError("unbounded")
        ratios = np.full(m, np.inf)
        ratios[positive] = x_b[positive] / direction[positive]
        best = ratios.min()
        # Bland tie-break on the leaving variable index
        leave_rows = np.flatnonzero(ratios <= best + 1e-15)
        leave = int(leave_rows[np.argmin(np.asarray(basis)[leave_rows])])
        basis[leave] = enter


def linprog_maximize(
    c: np.ndarray,
    a_ub: np.ndarray | None = None,
    b_ub: np.ndarray | None = None,
    a_eq: np.ndarray | None = None,
    b_eq: np.ndarray | None = None,
    max_iter: int = 100000,
) -> LpResult:
    """Maximize c.x over {x >= 0, A_ub x <= b_ub, A_eq x = b_eq}."""
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    rows = []
    rhs = []
    n_slack = 0
    if a_ub is not None:
        a_ub = np.asarray(a_ub, dtype=float)
        b_ub = np.asarray(b_ub, dtype=float)
        n_slack = a_ub.shape[0]
        rows.append(np.hstack([a_ub, np.eye(n_slack)]))
        rhs.append(b_ub)
    if a_eq is not None:
        a_eq = np.asarray(a_eq, dtype=float)
        b_eq = np.asarray(b_eq, dtype=float)
        pad = np.zeros((a_eq.shape[0], n_slack))
        rows.append(np.hstack([a_eq, pad]))
        rhs.append(b_eq)
    if not rows:
        raise ValueError("no constraints given")
    a_full = np.vstack(rows)
    b_full = np.concatenate(rhs)
    m = a_full.shape[0]
    # Flip rows to make the RHS nonnegative before adding artificials.
    neg = b_full < 0
    a_full[neg] *= -1.0
    b_full[neg] *= -1.0

    n_total = n + n_slack
    # Phase 1: artificial variables for every row; slack columns that form
    # an identity with nonnegative RHS would also do, but artificials on all
    # rows keep the logic uniform.
    a_phase1 = np.hstack([a_full, np.eye(m)])
    cost1 = np.zeros(n_total + m)
    cost1[n_total:] = -1.0
    basis = list(range(n_total, n_total + m))
    x_b, it1 = _solve_phase(a_phase1, b_full, cost1, basis, max_iter)
    infeas = -(cost1[basis] @ x_b)
    if infeas > 1e-7:
        return LpResult(np.full(n, np.nan), np.nan, "infeasible", it1)
    # Drive remaining artificials out of the basis where possible.
    for row, var in enumerate(list(basis)):
        if var >= n_total:
            b_mat = a_phase1[:, basis]
            for j in range(n_total):
                if j in basis:
                    continue
                direction = np.linalg.solve(b_mat, a_phase1[:, j])
                if abs(direction[row]) > _PIVOT_TOL:
                    basis[row] = j
                    break

    keep = [i for i, var in enumerate(basis) if var < n_total]
    if len(keep) < m:
        # Redundant rows: drop them along with their stuck artificials.
        a_full = a_full[keep]
        b_full = b_full[keep]
        basis = [basis[i] for i in keep]
        m = len(keep)

    cost2 = np.zeros(n_total)
    cost2[:n] = c
    x_b, it2 = _solve_phase(a_full, b_full, cost2, basis, max_iter)
    x = np.zeros(n_total)
    for row, var in enumerate(basis):
        x[var] = x_b[row]
    if np.any(x[:n] < -_FEAS_TOL):
        raise SimplexError("solution violates nonnegativity")
    sol = np.clip(x[:n], 0.0, None)
    return LpResult(sol, float(c @ sol), "optimal", it1 + it2)
