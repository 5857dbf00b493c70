"""Dense phase-1 simplex for small box-bounded feasibility problems.

Chamber checks produce LPs with a handful of variables and at most
``n_c + d`` rows, so a dense tableau with Bland's rule is both fast enough
and fully reproducible.
"""

from __future__ import annotations

import numpy as np

from pwacut.errors import NumericalFailure

FEAS_TOL = 1e-9
_PIVOT_TOL = 1e-12


def find_feasible_point(A_ub, b_ub, lower, upper, A_eq=None, b_eq=None,
                        tol: float = FEAS_TOL, max_iter: int | None = None):
    """Find ``x`` with ``lower <= x <= upper``, ``A_ub x <= b_ub``, ``A_eq x = b_eq``.

    Returns the point, or ``None`` when the system is infeasible.  The
    returned point is a vertex of the feasible polytope.

    Raises:
        NumericalFailure: the pivot limit was reached.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    d = lower.size
    A_ub = np.zeros((0, d)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, d)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
    A_eq = np.zeros((0, d)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, d)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)

    # y = x - lower, 0 <= y <= width
    width = upper - lower
    rhs_ub = np.concatenate([b_ub - A_ub @ lower, width])
    rows_ub = np.vstack([A_ub, np.eye(d)])
    rhs_eq = b_eq - A_eq @ lower
    m_ub, m_eq = rows_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    flip_ub = rhs_ub < 0
    flip_eq = rhs_eq < 0
    n_art = int(flip_ub.sum()) + m_eq
    n_cols = d + m_ub + n_art

    T = np.zeros((m + 1, n_cols + 1))
    sign_ub = np.where(flip_ub, -1.0, 1.0)
    T[:m_ub, :d] = rows_ub * sign_ub[:, None]
    T[:m_ub, d:d + m_ub] = np.diag(sign_ub)
    T[:m_ub, -1] = rhs_ub * sign_ub
    sign_eq = np.where(flip_eq, -1.0, 1.0)
    T[m_ub:m, :d] = A_eq * sign_eq[:, None]
    T[m_ub:m, -1] = rhs_eq * sign_eq

    basis = np.empty(m, dtype=np.intp)
    art_rows = np.concatenate([np.flatnonzero(flip_ub), m_ub + np.arange(m_eq)])
    basis[:m_ub] = d + np.arange(m_ub)
    art_cols = d + m_ub + np.arange(n_art)
    T[art_rows, art_cols] = 1.0
    basis[art_rows] = art_cols

    if n_art:
        # phase-1 objective: minimize the sum of artificials
        T[m, :] = -T[art_rows].sum(axis=0)
        T[m, art_cols] = 0.0
        scale = max(1.0, float(np.abs(T[:m, -1]).max()))
        limit = 50 * (m + n_cols) if max_iter is None else max_iter
        for _ in range(limit):
            costs = T[m, :n_cols]
            entering = np.flatnonzero(costs < -_PIVOT_TOL * scale)
            if entering.size == 0:
                break
            col = entering[0]
            column = T[:m, col]
            ok = column > _PIVOT_TOL
            if not ok.any():
                raise NumericalFailure("unbounded phase-1 direction")
            ratios = np.full(m, np.inf)
            ratios[ok] = T[:m, -1][ok] / column[ok]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + _PIVOT_TOL * max(1.0, abs(best)))
            row = ties[np.argmin(basis[ties])]
            _pivot(T, row, col)
            basis[row] = col
        else:
            raise NumericalFailure("phase-1 simplex hit the pivot limit")
        if -T[m, -1] > tol * scale:
            return None

    y = np.zeros(n_cols)
    y[basis] = T[:m, -1]
    x = lower + np.clip(y[:d], 0.0, width)
    return x


def _pivot(T, row, col):
    T[row] /= T[row, col]
    factor = T[:, col].copy()
    factor[row] = 0.0
    T -= np.outer(factor, T[row])
