"""Chamber enumeration, adjacency and region descriptions of a cut arrangement.

Conventions:

* ``sigma`` is an ``(n_c, P)`` 0/1 matrix whose columns are the side
  vectors of the nonempty chambers.  Column order is ascending in the
  integer ``l`` whose binary digits, most significant first, are
  ``sigma_1 ... sigma_nc``.
* Hyperplanes are numbered from 1 in the adjacency matrix and in region
  halfspace lists; 0 means "not adjacent".
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from pwacut.errors import NoChamber, NumericalFailure, TooManyCuts
from pwacut.geometry import CutArrangement, Domain, enclosing_hypersphere
from pwacut.lp import find_feasible_point

log = logging.getLogger(__name__)

STRICT_EPS = 1e-7
DEFAULT_NC_LIMIT = 20


@dataclass(frozen=True)
class Region:
    """Chamber ``index`` described only by its boundary cuts.

    ``halfspaces`` holds ``(i, bit)`` pairs (``i`` 1-based); each stands for
    ``(-1)**bit * h_i @ x <= (-1)**bit``.
    """

    index: int
    halfspaces: tuple

    def inequalities(self, hyperplanes):
        """Return ``(G, g)`` such that the region is ``{x in D | G x <= g}``."""
        hyperplanes = np.asarray(hyperplanes, dtype=float)
        d = hyperplanes.shape[1]
        if not self.halfspaces:
            return np.zeros((0, d)), np.zeros(0)
        sign = np.array([(-1.0) ** bit for _, bit in self.halfspaces])
        rows = np.array([hyperplanes[i - 1] for i, _ in self.halfspaces])
        return rows * sign[:, None], sign


def strict_margins(hyperplanes, domain: Domain, eps: float = STRICT_EPS) -> np.ndarray:
    rho = enclosing_hypersphere(domain).radius
    return eps * np.maximum(1.0, np.linalg.norm(hyperplanes, axis=1) * rho)


def _side_constraints(hyperplanes, bits, margins):
    """Rows ``A x <= b`` for the given side bits (0: strict-below, 1: above)."""
    hyperplanes = np.asarray(hyperplanes, dtype=float).reshape(-1, hyperplanes.shape[-1])
    sign = np.where(np.asarray(bits) == 1, -1.0, 1.0)
    A = hyperplanes * sign[:, None]
    b = np.where(np.asarray(bits) == 1, -1.0, 1.0 - margins)
    return A, b


def lp_feasible(constraints, domain: Domain, eps: float = STRICT_EPS) -> bool:
    """Decide whether the box plus the given halfspaces admits a point.

    ``constraints`` is a sequence of ``(h, sense)`` with sense ``"lt"``
    (``h @ x < 1``, realized with a relative margin), ``"ge"``
    (``h @ x >= 1``) or ``"eq"`` (``h @ x == 1``).

    Raises:
        NumericalFailure: the simplex did not converge.
    """
    d = domain.dim
    rho = enclosing_hypersphere(domain).radius
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for h, sense in constraints:
        h = np.asarray(h, dtype=float).reshape(d)
        if sense == "lt":
            margin = eps * max(1.0, float(np.linalg.norm(h)) * rho)
            A_ub.append(h)
            b_ub.append(1.0 - margin)
        elif sense == "ge":
            A_ub.append(-h)
            b_ub.append(-1.0)
        elif sense == "eq":
            A_eq.append(h)
            b_eq.append(1.0)
        else:
            raise ValueError(f"unknown constraint sense {sense!r}")
    x = find_feasible_point(
        np.array(A_ub).reshape(-1, d), np.array(b_ub),
        domain.lower, domain.upper,
        np.array(A_eq).reshape(-1, d), np.array(b_eq),
    )
    return x is not None


def chambers(arrangement: CutArrangement, domain: Domain, *, samples=None,
             nc_limit: int = DEFAULT_NC_LIMIT, method: str = "tree",
             eps: float = STRICT_EPS) -> np.ndarray:
    """Feasibility matrix of ``arrangement`` inside ``domain``.

    ``method="sweep"`` checks every integer ``l`` in ``[0, 2**n_c)`` with its
    own LP.  The default ``"tree"`` walks the same candidates as a binary
    tree over ``sigma_1, sigma_2, ...`` and drops a whole subtree as soon as
    a prefix is infeasible; prefixes already witnessed by a known point
    (a parent LP vertex or one of ``samples``) skip the LP.  Both give the
    same matrix in the same column order.

    Raises:
        TooManyCuts: more than ``nc_limit`` cuts.
        ValueError: the arrangement contains degenerate hyperplanes.
    """
    H = np.asarray(arrangement.hyperplanes if isinstance(arrangement, CutArrangement)
                   else arrangement, dtype=float)
    H = H.reshape(-1, domain.dim)
    n_c = H.shape[0]
    if n_c > nc_limit:
        raise TooManyCuts(f"{n_c} cuts exceed the limit of {nc_limit}")
    if not np.all(np.isfinite(H)):
        raise ValueError("arrangement contains degenerate hyperplanes")
    margins = strict_margins(H, domain, eps) if n_c else np.zeros(0)
    if method == "sweep":
        cols = _sweep(H, margins, domain)
    elif method == "tree":
        cols = _tree(H, margins, domain, samples)
    else:
        raise ValueError(f"unknown method {method!r}")
    if not cols:
        # closed box always holds at least one chamber; reaching here means
        # the margins swallowed everything
        raise NoChamber("no feasible chamber found")
    return np.array(cols, dtype=np.int8).T.reshape(n_c, len(cols))


def _bits_of(l: int, n_c: int) -> np.ndarray:
    return np.array([(l >> (n_c - 1 - i)) & 1 for i in range(n_c)], dtype=np.int8)


def _sweep(H, margins, domain):
    n_c = H.shape[0]
    cols = []
    for l in range(2**n_c):
        bits = _bits_of(l, n_c)
        A, b = _side_constraints(H, bits, margins)
        if _solve_or_skip(A, b, domain, bits) is not None:
            cols.append(bits)
    return cols


def _solve_or_skip(A, b, domain, bits):
    try:
        return find_feasible_point(A, b, domain.lower, domain.upper)
    except NumericalFailure as exc:
        log.warning("chamber %s treated as absent: %s", list(bits), exc)
        return None


def _satisfies(value, bit, margin):
    return value >= 1.0 if bit else value <= 1.0 - margin


def _tree(H, margins, domain, samples):
    n_c, d = H.shape
    if samples is not None:
        pts = np.asarray(samples, dtype=float).reshape(-1, d)
        pts = pts[domain.contains(pts)]
        proj = pts @ H.T
    else:
        pts = np.zeros((0, d))
        proj = np.zeros((0, n_c))
    cols = []
    # stack of (prefix bits, witness point, candidate sample indices)
    stack = [([], np.zeros(d), np.arange(pts.shape[0]))]
    while stack:
        prefix, witness, idx = stack.pop()
        i = len(prefix)
        if i == n_c:
            cols.append(np.array(prefix, dtype=np.int8))
            continue
        children = []
        h_val = float(H[i] @ witness)
        col = proj[idx, i]
        for bit in (0, 1):
            if bit:
                sub = idx[col >= 1.0]
            else:
                sub = idx[col <= 1.0 - margins[i]]
            bits = prefix + [bit]
            if _satisfies(h_val, bit, margins[i]):
                children.append((bits, witness, sub))
            elif sub.size:
                children.append((bits, pts[sub[0]], sub))
            else:
                A, b = _side_constraints(H[: i + 1], bits, margins[: i + 1])
                x = _solve_or_skip(A, b, domain, bits)
                if x is not None:
                    children.append((bits, x, sub))
        # push 1 first so that 0 is expanded first (ascending l)
        stack.extend(reversed(children))
    return cols


def adjacency(sigma) -> np.ndarray:
    """``A[p, q] = i`` (1-based) when columns p, q differ only in row i."""
    S = np.asarray(sigma, dtype=np.int8)
    P = S.shape[1]
    if S.shape[0] == 0:
        return np.zeros((P, P), dtype=np.int64)
    diff = S.T[:, None, :] != S.T[None, :, :]
    single = diff.sum(axis=2) == 1
    idx = np.argmax(diff, axis=2) + 1
    A = np.where(single, idx, 0).astype(np.int64)
    # upper triangle, then symmetrize
    A = np.triu(A, 1)
    A = A + A.T
    assert A.shape == (P, P)
    return A


def regions(arrangement: CutArrangement, sigma):
    """Minimal region descriptions of every chamber.

    Returns ``(regions, A, P)``; region ``p`` lists only the cuts it shares
    with a neighboring chamber, oriented by its own side bits.
    """
    S = np.asarray(sigma, dtype=np.int8)
    A = adjacency(S)
    P = S.shape[1]
    out = []
    for p in range(P):
        cuts = sorted({int(i) for i in A[p] if i > 0})
        out.append(Region(p, tuple((i, int(S[i - 1, p])) for i in cuts)))
    return out, A, P


def facet_edges(A):
    """``(p, q, i)`` for every adjacent pair ``p < q`` sharing cut ``i`` (1-based)."""
    A = np.asarray(A)
    ps, qs = np.nonzero(np.triu(A, 1))
    return [(int(p), int(q), int(A[p, q])) for p, q in zip(ps, qs)]


def column_codes(sigma) -> np.ndarray:
    """Integer ``l`` of each column (first row is the most significant bit)."""
    S = np.asarray(sigma, dtype=np.int64)
    n_c = S.shape[0]
    weights = (1 << np.arange(n_c - 1, -1, -1, dtype=np.int64))
    return weights @ S if n_c else np.zeros(S.shape[1], dtype=np.int64)


def locate_many(hyperplanes, sigma, X) -> np.ndarray:
    """Chamber index of every row of ``X`` (working frame).

    Points whose side vector matches no column (boundary round-off) go to
    the column at minimal Hamming distance, lowest index first.
    """
    H = np.asarray(hyperplanes, dtype=float)
    S = np.asarray(sigma, dtype=np.int8)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n_c, P = S.shape
    if n_c == 0:
        return np.zeros(X.shape[0], dtype=np.intp)
    bits = (X @ H.T >= 1.0).astype(np.int8)
    codes = column_codes(bits.T)
    col_codes = column_codes(S)
    order = np.argsort(col_codes, kind="stable")
    sorted_codes = col_codes[order]
    pos = np.searchsorted(sorted_codes, codes)
    pos_c = np.minimum(pos, P - 1)
    found = sorted_codes[pos_c] == codes
    out = np.empty(X.shape[0], dtype=np.intp)
    out[found] = order[pos_c[found]]
    missing = np.flatnonzero(~found)
    if missing.size:
        log.debug("%d points matched no chamber; using nearest side vector", missing.size)
        ham = (bits[missing][:, :, None] != S[None, :, :]).sum(axis=1)
        out[missing] = np.argmin(ham, axis=1)
    return out


def locate_chamber(arrangement, sigma, x, *, strict: bool = False) -> int:
    """Chamber index of the working-frame point ``x``.

    With ``strict=True`` an unmatched side vector raises :class:`NoChamber`
    instead of falling back to the nearest column.
    """
    H = arrangement.hyperplanes if isinstance(arrangement, CutArrangement) else arrangement
    H = np.asarray(H, dtype=float)
    S = np.asarray(sigma, dtype=np.int8)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if strict and S.shape[0]:
        bits = (x @ H.T >= 1.0).astype(np.int8)[0]
        hits = np.flatnonzero(np.all(S == bits[:, None], axis=0))
        if hits.size == 0:
            raise NoChamber(f"side vector {bits.tolist()} matches no chamber")
        return int(hits[0])
    return int(locate_many(H, S, x)[0])


def facet_feasible(hyperplanes, sigma_col, i: int, domain: Domain,
                   eps: float = STRICT_EPS) -> bool:
    """Whether chamber ``sigma_col`` touches cut ``i`` (1-based) in a nonempty facet."""
    H = np.asarray(hyperplanes, dtype=float)
    cons = []
    for k, (h, bit) in enumerate(zip(H, sigma_col), start=1):
        if k == i:
            cons.append((h, "eq"))
        else:
            cons.append((h, "ge" if bit else "lt"))
    return lp_feasible(cons, domain, eps)


def zaslavsky_bound(n_c: int, d: int) -> int:
    """Upper bound on the chamber count of ``n_c`` hyperplanes in R^d."""
    from math import comb

    return sum(comb(n_c, k) for k in range(min(n_c, d) + 1))


def chambers_export(sigma, A) -> dict:
    """JSON-ready chamber diagnostics."""
    S = np.asarray(sigma, dtype=int)
    return {"sigma": S.tolist(), "adjacency": np.asarray(A, dtype=int).tolist(),
            "P": int(S.shape[1])}
