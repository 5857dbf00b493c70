"""Sample-based cost and the per-region affine fits.

Fits are computed in normalized coordinates ``x / half_width`` and mapped
back, which keeps the normal equations well conditioned on boxes with very
different axis ranges.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.stats import qmc

from pwacut.geometry import Domain
from pwacut.partition import facet_edges

log = logging.getLogger(__name__)

RIDGE = 1e-8
# refinement sweeps against the unregularized system; the ridge only
# guards rank, so its bias on well-posed regions is iterated away
REFINE_STEPS = 2


@dataclass(frozen=True, eq=False)
class AffineMode:
    """Local mode ``f(x) = J @ x + K`` (working frame)."""

    J: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        J = np.array(self.J, dtype=float, ndmin=2)
        K = np.array(self.K, dtype=float, ndmin=1).reshape(-1)
        if J.shape[0] != K.size:
            raise ValueError("J must have one row per entry of K")
        if not (np.all(np.isfinite(J)) and np.all(np.isfinite(K))):
            raise ValueError("affine mode entries must be finite")
        J.setflags(write=False)
        K.setflags(write=False)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "K", K)

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.J.T + self.K

    def __eq__(self, other):
        return (isinstance(other, AffineMode) and np.array_equal(self.J, other.J)
                and np.array_equal(self.K, other.K))


@dataclass(eq=False)
class SampleSet:
    """Fixed point cloud over the domain (working frame) with function values."""

    points: np.ndarray
    values: np.ndarray | None
    seed: int
    assignment: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return 1.0 / (np.sum(self.values**2, axis=1) + 1.0)


@dataclass(eq=False)
class FitResult:
    modes: list
    gamma: float
    max_rel_err: float
    boundary_couplings: list = field(default_factory=list)
    counts: np.ndarray | None = None
    undersampled: np.ndarray | None = None


def sample_domain(domain: Domain, N: int, seed: int, func=None) -> SampleSet:
    """Scrambled Halton points over ``domain``.

    ``func``, when given, maps an ``(N, d)`` array of *original-frame*
    points to an ``(N, n)`` (or ``(N,)``) array of values.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    sampler = qmc.Halton(d=domain.dim, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        unit = sampler.random(N)
    pts = domain.lower + unit * (domain.upper - domain.lower)
    values = None
    if func is not None:
        values = np.asarray(func(domain.to_original(pts)), dtype=float).reshape(N, -1)
    return SampleSet(pts, values, seed)


def predict(modes, X, assignment) -> np.ndarray:
    J = np.stack([m.J for m in modes])
    K = np.stack([m.K for m in modes])
    X = np.asarray(X, dtype=float)
    return np.einsum("knd,kd->kn", J[assignment], X) + K[assignment]


def cost(samples: SampleSet, modes, assignment):
    """Mean relative squared error and maximum relative error on the samples."""
    F = samples.values
    err = F - predict(modes, samples.points, assignment)
    sq = np.sum(err**2, axis=1) / (np.sum(F**2, axis=1) + 1.0)
    return float(np.mean(sq)), float(np.sqrt(np.max(sq)))


class Design:
    """Per-sample weighted outer products, reused across partitions."""

    def __init__(self, samples: SampleSet, domain: Domain):
        self.samples = samples
        self.scale = np.asarray(domain.half_width, dtype=float)
        X = samples.points / self.scale
        N, d = X.shape
        Z = np.hstack([X, np.ones((N, 1))])
        w = samples.weights
        self.w = w
        WZ = w[:, None] * Z
        self.dim = d
        self.outdim = samples.values.shape[1]
        self.Z = Z
        gram = (WZ[:, :, None] * Z[:, None, :]) / N
        cross = (WZ[:, :, None] * samples.values[:, None, :]) / N
        # one row per sample, so a region indicator product sums every entry at once
        self.stacked = np.ascontiguousarray(
            np.hstack([gram.reshape(N, -1), cross.reshape(N, -1)]))

    def accumulate(self, assignment, P):
        """Per-region Gram matrices ``(P, D, D)``, right-hand sides and counts."""
        D = self.dim + 1
        n = self.outdim
        N = assignment.size
        assert N == self.stacked.shape[0]
        indicator = scipy.sparse.csr_matrix(
            (np.ones(N), (assignment, np.arange(N))), shape=(P, N))
        sums = indicator @ self.stacked
        m = np.bincount(assignment, minlength=P)
        return sums[:, :D * D].reshape(P, D, D), sums[:, D * D:].reshape(P, D, n), m

    def cost_theta(self, theta, assignment):
        """Same as :func:`cost` but from normalized-coordinate parameters."""
        P, D, n = theta.shape
        F = self.samples.values
        allpred = self.Z @ theta.transpose(1, 0, 2).reshape(D, P * n)
        pred = allpred.reshape(-1, P, n)[np.arange(assignment.size), assignment]
        sq = np.sum((F - pred) ** 2, axis=1) * self.w
        return float(np.mean(sq)), float(np.sqrt(np.max(sq)))

    def to_modes(self, theta):
        """``theta[p]`` is ``(D, n)`` in normalized coordinates."""
        modes = []
        for t in theta:
            J = (t[:-1] / self.scale[:, None]).T
            modes.append(AffineMode(J, t[-1]))
        return modes


def _region_count(regions):
    return regions if isinstance(regions, (int, np.integer)) else len(regions)


def _finish(design, samples, modes, assignment, m, couplings=(), theta=None):
    if theta is None:
        gamma, max_rel = cost(samples, modes, assignment)
    else:
        gamma, max_rel = design.cost_theta(theta, assignment)
    under = m < design.dim + 1
    return FitResult(modes, gamma, max_rel, list(couplings), m, under)


def fit_unconstrained(samples: SampleSet, regions, assignment, domain: Domain,
                      design: Design | None = None) -> FitResult:
    """Independent weighted least-squares affine fit on every region."""
    design = design or Design(samples, domain)
    P = _region_count(regions)
    assignment = np.asarray(assignment, dtype=np.intp)
    G, B, m = design.accumulate(assignment, P)
    N = samples.size
    G_reg = G + (RIDGE / N) * np.eye(design.dim + 1)
    theta = np.linalg.solve(G_reg, B)
    for _ in range(REFINE_STEPS):
        theta = theta + np.linalg.solve(G_reg, B - G @ theta)
    modes = design.to_modes(theta)
    return _finish(design, samples, modes, assignment, m, theta=theta)


def continuity_matrix(edges, hyperplanes, scale, P):
    """Equality rows ``C @ [theta; c] = 0`` in normalized coordinates.

    Unknowns are ordered as the stacked ``(d + 1)``-blocks of every region
    followed by one coupling scalar per edge (per output row).
    """
    d = scale.size
    D = d + 1
    E = len(edges)
    H = np.asarray(hyperplanes, dtype=float) * scale
    C = np.zeros((E * D, P * D + E))
    for e, (p, q, i) in enumerate(edges):
        rows = slice(e * D, (e + 1) * D)
        C[rows, p * D:(p + 1) * D] = np.eye(D)
        C[rows, q * D:(q + 1) * D] -= np.eye(D)
        C[e * D:e * D + d, P * D + e] = -H[i - 1]
        C[e * D + d, P * D + e] = 1.0
    return C


def fit_continuous(samples: SampleSet, regions, adjacency, arrangement, assignment,
                   domain: Domain, design: Design | None = None) -> FitResult:
    """Joint fit with ``J_p - J_q = c h_i^T`` and ``K_p - K_q = -c`` on every facet.

    Solved as one equality-constrained linear least-squares problem through
    its KKT system; each output row shares the same KKT matrix.
    """
    design = design or Design(samples, domain)
    P = _region_count(regions)
    H = getattr(arrangement, "hyperplanes", arrangement)
    assignment = np.asarray(assignment, dtype=np.intp)
    edges = facet_edges(adjacency)
    if not edges:
        result = fit_unconstrained(samples, P, assignment, domain, design)
        return result
    D = design.dim + 1
    G, B, m = design.accumulate(assignment, P)
    N = samples.size
    n_theta = P * D
    E = len(edges)
    n_var = n_theta + E
    C = independent_rows(continuity_matrix(edges, H, design.scale, P))
    n_con = C.shape[0]

    KKT = np.zeros((n_var + n_con, n_var + n_con))
    for p in range(P):
        sl = slice(p * D, (p + 1) * D)
        KKT[sl, sl] = G[p]
    KKT[:n_var, n_var:] = C.T
    KKT[n_var:, :n_var] = C
    ridge = np.zeros(n_var + n_con)
    ridge[:n_theta] = RIDGE / N
    rhs = np.zeros((n_var + n_con, design.outdim))
    rhs[:n_theta] = B.reshape(n_theta, design.outdim)

    sol = _solve_kkt(KKT, ridge, rhs)
    theta = sol[:n_theta].reshape(P, D, design.outdim)
    coup = sol[n_theta:n_var]  # (E, n)
    modes = design.to_modes(theta)
    couplings = [(p, q, coup[e].copy()) for e, (p, q, _) in enumerate(edges)]
    return _finish(design, samples, modes, assignment, m, couplings, theta)


def independent_rows(C, rtol: float = 1e-10):
    """Drop linearly dependent rows (cycles of facets around a shared vertex
    repeat constraints), keeping the original row order."""
    if C.shape[0] == 0:
        return C
    _, R, piv = scipy.linalg.qr(C.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rtol * diag[0])) if diag.size else 0
    return C[np.sort(piv[:rank])]


def _solve_kkt(KKT, ridge, rhs):
    """Solve ``KKT x = rhs`` with the ridge on the primal block, refined."""
    KKT_reg = KKT + np.diag(ridge)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(KKT_reg, check_finite=False)
        sol = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
        for _ in range(REFINE_STEPS):
            sol = sol + scipy.linalg.lu_solve(lu, rhs - KKT @ sol, check_finite=False)
        if np.all(np.isfinite(sol)):
            return sol
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError):
        pass
    log.debug("KKT system singular; falling back to least-norm solve")
    return np.linalg.lstsq(KKT_reg, rhs, rcond=None)[0]


def continuity_residuals(modes, couplings, adjacency, hyperplanes):
    """Largest ``|J_p - J_q - c h^T|_F`` and ``|K_p - K_q + c|_inf`` over facets."""
    A = np.asarray(adjacency)
    H = np.asarray(hyperplanes, dtype=float)
    worst_j = worst_k = 0.0
    for p, q, c in couplings:
        h = H[A[p, q] - 1]
        c = np.asarray(c, dtype=float)
        dj = modes[p].J - modes[q].J - np.outer(c, h)
        dk = modes[p].K - modes[q].K + c
        worst_j = max(worst_j, float(np.linalg.norm(dj)))
        worst_k = max(worst_k, float(np.abs(dk).max()))
    return worst_j, worst_k
