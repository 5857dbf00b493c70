"""Box domains, the circumscribed hypersphere and cut hyperplanes.

All geometry lives in the *working frame*: the box is shifted so that its
center sits at the origin, which is also the center of the enclosing
hypersphere.  Cutting hyperplanes are written as ``{x | h @ x = 1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pwacut.errors import SingularPoints

COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class Domain:
    """Axis-aligned box, stored centered at the origin.

    ``lower``/``upper`` are working-frame bounds (``lower == -upper``) and
    ``shift`` is the center of the box in the original frame.
    """

    lower: np.ndarray
    upper: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        sh = np.asarray(self.shift, dtype=float).reshape(-1)
        if not (lo.shape == hi.shape == sh.shape) or lo.size == 0:
            raise ValueError("lower, upper and shift must be vectors of equal length")
        if not np.all(np.isfinite(lo) & np.isfinite(hi) & np.isfinite(sh)):
            raise ValueError("domain bounds must be finite")
        if np.any(hi <= lo):
            raise ValueError("domain must have nonempty interior (upper > lower)")
        if not np.allclose(lo, -hi, rtol=1e-12, atol=0.0):
            raise ValueError("working-frame domain must be centered (lower == -upper)")
        for name, arr in (("lower", lo), ("upper", hi), ("shift", sh)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_bounds(cls, lower, upper) -> "Domain":
        """Build a centered domain from original-frame bounds."""
        lower = np.asarray(lower, dtype=float).reshape(-1)
        upper = np.asarray(upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise ValueError("lower and upper must have the same length")
        if np.any(upper <= lower):
            raise ValueError("domain must have nonempty interior (upper > lower)")
        half = (upper - lower) / 2.0
        return cls(-half, half, lower + half)

    @property
    def dim(self) -> int:
        return self.upper.size

    @property
    def half_width(self) -> np.ndarray:
        return self.upper

    @property
    def original_lower(self) -> np.ndarray:
        return self.lower + self.shift

    @property
    def original_upper(self) -> np.ndarray:
        return self.upper + self.shift

    def to_working(self, x):
        return np.asarray(x, dtype=float) - self.shift

    def to_original(self, x):
        return np.asarray(x, dtype=float) + self.shift

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        """Working-frame membership test, vectorized over the last axis."""
        x = np.asarray(x, dtype=float)
        slack = tol * np.maximum(1.0, self.upper)
        return np.all((x >= self.lower - slack) & (x <= self.upper + slack), axis=-1)

    def vertices(self) -> np.ndarray:
        d = self.dim
        signs = ((np.arange(2**d)[:, None] >> np.arange(d)[None, :]) & 1) * 2 - 1
        return signs * self.upper

    def __eq__(self, other):
        if not isinstance(other, Domain):
            return NotImplemented
        return (
            np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
            and np.array_equal(self.shift, other.shift)
        )

    def __repr__(self):
        return (
            f"Domain(lower={self.original_lower.tolist()}, "
            f"upper={self.original_upper.tolist()})"
        )


@dataclass(frozen=True)
class Hypersphere:
    radius: float

    def __post_init__(self):
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise ValueError("radius must be positive and finite")


@dataclass(frozen=True, eq=False)
class CutArrangement:
    """A list of cut hyperplanes plus the genome they were decoded from.

    ``degenerate[i]`` marks hyperplanes whose defining points were
    singular; their coefficient rows are NaN.
    """

    hyperplanes: np.ndarray
    degenerate: np.ndarray = field(default=None)
    genome: np.ndarray | None = None

    def __post_init__(self):
        h = np.array(self.hyperplanes, dtype=float, ndmin=2)
        if self.degenerate is None:
            deg = ~np.all(np.isfinite(h), axis=1) | ~np.any(h != 0, axis=1)
        else:
            deg = np.asarray(self.degenerate, dtype=bool).reshape(-1)
        if deg.size != h.shape[0]:
            raise ValueError("degenerate flags must match the hyperplane count")
        h.setflags(write=False)
        deg.setflags(write=False)
        object.__setattr__(self, "hyperplanes", h)
        object.__setattr__(self, "degenerate", deg)

    @property
    def n_cuts(self) -> int:
        return self.hyperplanes.shape[0]

    @property
    def dim(self) -> int:
        return self.hyperplanes.shape[1]

    @property
    def any_degenerate(self) -> bool:
        return bool(self.degenerate.any())


class AngleGenome:
    """Spherical angles for every defining point of every cut.

    ``angles[i, k, j]`` is angle ``j`` of point ``k`` of hyperplane ``i``.
    The last angle of each point is azimuthal (``[0, 2*pi]``), the rest
    are polar (``[0, pi]``).
    """

    def __init__(self, angles):
        a = np.array(angles, dtype=float)
        if a.ndim != 3 or a.shape[2] != a.shape[1] - 1:
            raise ValueError("genome must have shape (n_c, d, d - 1)")
        lo, hi = angle_bounds(a.shape[1])
        if np.any(a < lo) or np.any(a > hi):
            raise ValueError("genome angles outside their bounds")
        a.setflags(write=False)
        self.angles = a

    @property
    def n_cuts(self) -> int:
        return self.angles.shape[0]

    @property
    def dim(self) -> int:
        return self.angles.shape[1]

    def __eq__(self, other):
        return isinstance(other, AngleGenome) and np.array_equal(self.angles, other.angles)

    def __repr__(self):
        return f"AngleGenome(n_c={self.n_cuts}, d={self.dim})"


def angle_bounds(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-angle lower/upper bounds for a point in ``d`` dimensions."""
    lo = np.zeros(d - 1)
    hi = np.full(d - 1, np.pi)
    if d > 1:
        hi[-1] = 2.0 * np.pi
    return lo, hi


def enclosing_hypersphere(domain: Domain) -> Hypersphere:
    return Hypersphere(float(np.linalg.norm(domain.upper)))


def spherical_to_cartesian(angles, rho: float) -> np.ndarray:
    """Map spherical angles to Cartesian points on a sphere of radius ``rho``.

    Vectorized over leading axes: ``angles`` has shape ``(..., d - 1)``
    and the result has shape ``(..., d)``.
    """
    phi = np.asarray(angles, dtype=float)
    lead = phi.shape[:-1]
    sin = np.sin(phi)
    # prefix[..., j] = prod_{v < j} sin(phi_v)
    prefix = np.ones(lead + (phi.shape[-1] + 1,))
    if phi.shape[-1]:
        prefix[..., 1:] = np.cumprod(sin, axis=-1)
    cos = np.concatenate([np.cos(phi), np.ones(lead + (1,))], axis=-1)
    return rho * cos * prefix


def cartesian_to_spherical(x) -> np.ndarray:
    """Inverse of :func:`spherical_to_cartesian` for a single point (radius dropped)."""
    x = np.asarray(x, dtype=float)
    d = x.size
    phi = np.zeros(d - 1)
    for j in range(d - 2):
        # arctan2 keeps small polar angles accurate where arccos would not
        phi[j] = np.arctan2(np.linalg.norm(x[j + 1:]), x[j])
    if d > 1:
        phi[-1] = np.arctan2(x[-1], x[-2]) % (2.0 * np.pi)
    return phi


def hyperplane_from_points(X) -> np.ndarray:
    """Coefficients ``h`` of the hyperplane ``h @ x = 1`` through the rows of ``X``.

    Raises:
        SingularPoints: if ``X`` is (numerically) singular, i.e. the points
            are affinely degenerate or their hyperplane passes through the
            origin.
    """
    X = np.asarray(X, dtype=float)
    d = X.shape[0]
    if X.shape != (d, d):
        raise ValueError("X must be a square matrix of row-stacked points")
    if not np.all(np.isfinite(X)):
        raise SingularPoints("non-finite point coordinates")
    cond = np.linalg.cond(X)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularPoints(f"condition number {cond:.3g} exceeds {COND_LIMIT:g}")
    return np.linalg.solve(X, np.ones(d))


def decode_genome(genome: AngleGenome, sphere: Hypersphere) -> CutArrangement:
    """Decode every cut's points and solve for its hyperplane.

    Singular point sets do not abort decoding; the affected hyperplane is
    flagged in ``CutArrangement.degenerate``.
    """
    pts = spherical_to_cartesian(genome.angles, sphere.radius)
    n_c, d = genome.n_cuts, genome.dim
    H = np.full((n_c, d), np.nan)
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(pts) if n_c else np.zeros(0)
    deg = ~np.isfinite(cond) | (cond > COND_LIMIT)
    ok = ~deg
    if ok.any():
        H[ok] = np.linalg.solve(pts[ok], np.ones((int(ok.sum()), d, 1)))[..., 0]
    return CutArrangement(H, deg, genome.angles)


def sigma_of_point(h, x) -> int:
    """Side bit of ``x`` w.r.t. ``h @ x = 1``; the hyperplane itself maps to 1."""
    return int(np.dot(h, x) >= 1.0)


def sigma_matrix(hyperplanes, points) -> np.ndarray:
    """Side bits of many points (rows) against many hyperplanes, shape (N, n_c)."""
    return (np.asarray(points) @ np.asarray(hyperplanes).T) >= 1.0
