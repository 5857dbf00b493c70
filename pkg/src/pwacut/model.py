"""The PWA model artifact: evaluation, validation and JSON (de)serialization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog

from pwacut import __version__
from pwacut.errors import OutOfDomain, SchemaError
from pwacut.fitting import AffineMode, cost, sample_domain
from pwacut.geometry import Domain
from pwacut.partition import (
    Region,
    column_codes,
    facet_edges,
    locate_many,
    lp_feasible,
)

SCHEMA_VERSION = 1
CONTINUITY_TOL = 1e-8
JUMP_TOL = 1e-6


@dataclass(eq=False)
class PwaModel:
    domain: Domain
    hyperplanes: np.ndarray
    sigma: np.ndarray
    adjacency: np.ndarray
    regions: list
    modes: list
    continuity: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        d = self.domain.dim
        self.hyperplanes = np.asarray(self.hyperplanes, dtype=float).reshape(-1, d)
        n_c = self.hyperplanes.shape[0]
        if n_c:
            self.sigma = np.asarray(self.sigma, dtype=np.int8).reshape(n_c, -1)
        else:
            # no cuts: one chamber, the whole box
            self.sigma = np.zeros((0, len(self.modes)), dtype=np.int8)
        self.adjacency = np.asarray(self.adjacency, dtype=np.int64)
        self.metadata = {**self.metadata}
        self.metadata.setdefault("tool_version", __version__)
        P = self.sigma.shape[1]
        if not (len(self.regions) == len(self.modes) == P == self.adjacency.shape[0]):
            raise ValueError("regions, modes, adjacency and sigma disagree on P")

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def outdim(self) -> int:
        return self.modes[0].K.size

    @property
    def n_regions(self) -> int:
        return self.sigma.shape[1]

    @property
    def n_cuts(self) -> int:
        return self.hyperplanes.shape[0]

    def locate(self, X_working) -> np.ndarray:
        return locate_many(self.hyperplanes, self.sigma, X_working)

    def predict_working(self, X_working) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X_working, dtype=float))
        idx = self.locate(X)
        J = np.stack([m.J for m in self.modes])
        K = np.stack([m.K for m in self.modes])
        return np.einsum("knd,kd->kn", J[idx], X) + K[idx]

    def __call__(self, x):
        return evaluate(self, x)

    def __eq__(self, other):
        if not isinstance(other, PwaModel):
            return NotImplemented
        return (
            self.domain == other.domain
            and np.array_equal(self.hyperplanes, other.hyperplanes)
            and np.array_equal(self.sigma, other.sigma)
            and np.array_equal(self.adjacency, other.adjacency)
            and self.regions == other.regions
            and self.modes == other.modes
            and self.continuity == other.continuity
            and self.metadata == other.metadata
        )


def evaluate(model: PwaModel, x) -> np.ndarray:
    """Model output at original-frame point(s) ``x``.

    A single point gives an ``(n,)`` vector; an ``(N, d)`` batch gives
    ``(N, n)``.

    Raises:
        OutOfDomain: a point lies outside the box beyond round-off.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != model.dim:
        raise ValueError(f"expected points of dimension {model.dim}")
    Xw = model.domain.to_working(X)
    inside = model.domain.contains(Xw, tol=1e-9)
    if not np.all(inside):
        bad = X[np.flatnonzero(~inside)[0]]
        raise OutOfDomain(f"point {bad.tolist()} lies outside the domain")
    out = model.predict_working(Xw)
    return out[0] if single else out


# -- validation ---------------------------------------------------------------


def facet_interior_point(G, g, h, domain: Domain):
    """Point in the relative interior of ``{G x <= g, h x = 1}`` within the box.

    Returns ``(x, radius)``; radius is the inscribed-ball radius inside the
    hyperplane (0 for a lower-dimensional facet) or ``None`` if empty.
    """
    d = domain.dim
    Gb = np.vstack([G, np.eye(d), -np.eye(d)])
    gb = np.concatenate([g, domain.upper, -domain.lower])
    # row norms of G projected onto the hyperplane's direction space
    hn = h / np.dot(h, h)
    proj = Gb - np.outer(Gb @ h, hn)
    norms = np.linalg.norm(proj, axis=1)
    c = np.zeros(d + 1)
    c[-1] = -1.0
    A_ub = np.hstack([Gb, norms[:, None]])
    A_eq = np.append(h, 0.0)[None, :]
    bounds = [(None, None)] * d + [(0.0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=gb, A_eq=A_eq, b_eq=[1.0], bounds=bounds,
                  method="highs")
    if res.status != 0:
        return None, None
    return res.x[:d], float(res.x[-1])


def hit_and_run_facet(G, g, h, domain: Domain, n: int, rng, burn: int = 20):
    """Approximately uniform points on the facet ``{G x <= g, h x = 1}`` of the box."""
    d = domain.dim
    x, radius = facet_interior_point(G, g, h, domain)
    if x is None:
        return np.zeros((0, d))
    if d == 1 or radius <= 0:
        return np.repeat(x[None, :], n, axis=0)
    Gb = np.vstack([G, np.eye(d), -np.eye(d)])
    gb = np.concatenate([g, domain.upper, -domain.lower])
    basis = null_space(h[None, :])
    out = np.empty((n, d))
    for k in range(-burn, n):
        u = basis @ rng.standard_normal(basis.shape[1])
        u /= np.linalg.norm(u)
        gu = Gb @ u
        slack = gb - Gb @ x
        with np.errstate(divide="ignore", invalid="ignore"):
            t = slack / gu
        hi = t[gu > 1e-15].min(initial=np.inf)
        lo = t[gu < -1e-15].max(initial=-np.inf)
        if np.isfinite(lo) and np.isfinite(hi) and hi > lo:
            x = x + rng.uniform(lo, hi) * u
            # remove drift off the hyperplane
            x = x + (1.0 - h @ x) * h / (h @ h)
        if k >= 0:
            out[k] = x
    return out


def chamber_closure(hyperplanes, sigma_col, skip: int | None = None):
    """``(G, g)`` with ``G x <= g`` describing the closure of one chamber."""
    H = np.asarray(hyperplanes, dtype=float)
    sign = np.where(np.asarray(sigma_col) == 1, -1.0, 1.0)
    keep = np.ones(H.shape[0], dtype=bool)
    if skip is not None:
        keep[skip - 1] = False
    return (H * sign[:, None])[keep], sign[keep]


def facet_samples(model: PwaModel, n_total: int, seed: int = 0):
    """Hit-and-run points on every shared facet: list of ``(p, q, points)``."""
    rng = np.random.default_rng(seed)
    edges = facet_edges(model.adjacency)
    if not edges:
        return []
    per = max(1, math.ceil(n_total / len(edges)))
    out = []
    for p, q, i in edges:
        G, g = chamber_closure(model.hyperplanes, model.sigma[:, p], skip=i)
        pts = hit_and_run_facet(G, g, model.hyperplanes[i - 1], model.domain, per, rng)
        out.append((p, q, pts))
    return out


def continuity_residuals(model: PwaModel):
    """Algebraic continuity residuals over all facets.

    The coupling ``c`` is recovered from the Jacobian jump by projection
    onto ``h``; returns ``(max |dJ - c h^T|_F, max |dK + c|)``.
    """
    worst_j = worst_k = 0.0
    for p, q, i in facet_edges(model.adjacency):
        h = model.hyperplanes[i - 1]
        dJ = model.modes[p].J - model.modes[q].J
        dK = model.modes[p].K - model.modes[q].K
        c = dJ @ h / (h @ h)
        worst_j = max(worst_j, float(np.linalg.norm(dJ - np.outer(c, h))))
        worst_k = max(worst_k, float(np.abs(dK + c).max()))
    return worst_j, worst_k


def max_facet_jump(model: PwaModel, n_total: int = 10_000, seed: int = 0) -> float:
    jump = 0.0
    for p, q, pts in facet_samples(model, n_total, seed):
        if pts.size == 0:
            continue
        fp = model.modes[p](pts)
        fq = model.modes[q](pts)
        jump = max(jump, float(np.linalg.norm(fp - fq, axis=1).max()))
    return jump


def validate(model: PwaModel, samples_n: int = 10_000, seed: int = 0, func=None) -> dict:
    """Check the partition and continuity properties of ``model``.

    ``func`` (original-frame, ``(N, d) -> (N, n)``) additionally recomputes
    the error metrics.  Findings are reported, never raised.
    """
    checks = []

    def check(name, passed, **info):
        checks.append({"name": name, "passed": bool(passed), **info})

    S = model.sigma
    dom = model.domain
    samples = sample_domain(dom, samples_n, seed, func)
    X = samples.points

    empty = []
    for p in range(model.n_regions):
        cons = [(h, "ge" if b else "lt") for h, b in zip(model.hyperplanes, S[:, p])]
        if not lp_feasible(cons, dom):
            empty.append(p)
    check("regions_nonempty", not empty, empty_regions=empty)

    codes = column_codes(((X @ model.hyperplanes.T) >= 1.0).T.astype(np.int8)) \
        if model.n_cuts else np.zeros(len(X), dtype=np.int64)
    col_codes = column_codes(S) if model.n_cuts else np.zeros(model.n_regions, dtype=np.int64)
    _, inverse, mult = np.unique(col_codes, return_inverse=True, return_counts=True)
    matches = np.zeros(len(X), dtype=np.int64)
    lookup = dict(zip(col_codes.tolist(), mult[inverse].tolist()))
    matches = np.array([lookup.get(c, 0) for c in codes.tolist()], dtype=np.int64)
    check("unique_assignment", np.all(matches <= 1),
          overlapping_samples=int(np.sum(matches > 1)))
    check("coverage", np.all(matches >= 1), unlocated_samples=int(np.sum(matches == 0)))

    assign = model.locate(X)
    counts = np.bincount(assign, minlength=model.n_regions)

    if model.continuity:
        res_j, res_k = continuity_residuals(model)
        scale = 1.0 + max(max(float(np.abs(m.J).max()), float(np.abs(m.K).max()))
                          for m in model.modes)
        check("continuity_jacobian", res_j <= CONTINUITY_TOL * scale, residual=res_j)
        check("continuity_offset", res_k <= CONTINUITY_TOL * scale, residual=res_k)
        jump = max_facet_jump(model, min(10_000, samples_n), seed)
        ref = samples.values if samples.values is not None else model.predict_working(X)
        bound = JUMP_TOL * (1.0 + float(np.linalg.norm(ref, axis=1).max()))
        check("facet_jump", jump <= bound, max_jump=jump, bound=bound)

    report = {"checks": checks, "region_counts": counts.tolist()}
    if func is not None:
        gamma, max_rel = cost(samples, model.modes, assign)
        report["gamma"] = gamma
        report["max_rel_err"] = max_rel
    report["passed"] = all(c["passed"] for c in checks)
    return report


# -- serialization ------------------------------------------------------------


def to_dict(model: PwaModel, extra: dict | None = None) -> dict:
    meta = model.metadata
    out = {
        "version": SCHEMA_VERSION,
        "dim": model.dim,
        "outdim": model.outdim,
        "domain": {
            "lower": _floats(model.domain.lower),
            "upper": _floats(model.domain.upper),
            "shift": _floats(model.domain.shift),
        },
        "hyperplanes": [_floats(h) for h in model.hyperplanes],
        "sigma": model.sigma.astype(int).tolist(),
        "adjacency": model.adjacency.astype(int).tolist(),
        "regions": [
            {"halfspaces": [{"i": int(i), "sigma": int(b)} for i, b in r.halfspaces]}
            for r in model.regions
        ],
        "modes": [{"J": [_floats(row) for row in m.J], "K": _floats(m.K)}
                  for m in model.modes],
        "continuity": bool(model.continuity),
        "metadata": {
            "seed": int(meta.get("seed", 0)),
            "nc": int(meta.get("nc", model.n_cuts)),
            "P": int(meta.get("P", model.n_regions)),
            "gamma": float(meta.get("gamma", 0.0)),
            "max_rel_err": float(meta.get("max_rel_err", 0.0)),
            "tool_version": str(meta.get("tool_version", __version__)),
        },
    }
    if extra:
        out.update(extra)
    return out


def _floats(v):
    return [float(x) for x in np.asarray(v, dtype=float).reshape(-1)]


def serialize(model: PwaModel, extra: dict | None = None) -> bytes:
    """Canonical JSON bytes; floats use the shortest round-trip repr."""
    return (json.dumps(to_dict(model, extra), indent=1) + "\n").encode("utf-8")


def deserialize(data) -> PwaModel:
    """Parse model JSON (bytes, str or an already-decoded dict).

    Raises:
        SchemaError: with a JSON-pointer-like path to the offending field.
    """
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8")
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise SchemaError("/", f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise SchemaError("/", "top level must be an object")

    for key in ("version", "dim", "outdim", "domain", "hyperplanes", "sigma",
                "adjacency", "regions", "modes", "continuity", "metadata"):
        if key not in data:
            raise SchemaError(f"/{key}", "missing required field")
    if data["version"] != SCHEMA_VERSION:
        raise SchemaError("/version", f"unsupported version {data['version']!r}")
    d = _int(data["dim"], "/dim", minimum=1)
    n = _int(data["outdim"], "/outdim", minimum=1)

    dom = _obj(data["domain"], "/domain")
    vecs = {}
    for key in ("lower", "upper", "shift"):
        if key not in dom:
            raise SchemaError(f"/domain/{key}", "missing required field")
        vecs[key] = _vec(dom[key], f"/domain/{key}", d)
    try:
        domain = Domain(vecs["lower"], vecs["upper"], vecs["shift"])
    except ValueError as exc:
        raise SchemaError("/domain", str(exc)) from None

    hyps = _list(data["hyperplanes"], "/hyperplanes")
    H = np.array([_vec(h, f"/hyperplanes/{k}", d) for k, h in enumerate(hyps)]).reshape(-1, d)
    n_c = H.shape[0]

    sig = _list(data["sigma"], "/sigma")
    if len(sig) != n_c:
        raise SchemaError("/sigma", f"expected {n_c} rows, got {len(sig)}")
    rows = []
    for k, row in enumerate(sig):
        row = _list(row, f"/sigma/{k}")
        for j, b in enumerate(row):
            if b not in (0, 1) or isinstance(b, bool):
                raise SchemaError(f"/sigma/{k}/{j}", "entries must be 0 or 1")
        rows.append(row)
    regions_raw = _list(data["regions"], "/regions")
    P = len(regions_raw)
    if n_c and any(len(r) != P for r in rows):
        raise SchemaError("/sigma", f"every row must have {P} columns")
    S = np.array(rows, dtype=np.int8).reshape(n_c, P)

    adj = _list(data["adjacency"], "/adjacency")
    if len(adj) != P:
        raise SchemaError("/adjacency", f"expected {P} rows, got {len(adj)}")
    A = np.zeros((P, P), dtype=np.int64)
    for p, row in enumerate(adj):
        row = _list(row, f"/adjacency/{p}")
        if len(row) != P:
            raise SchemaError(f"/adjacency/{p}", f"expected {P} entries")
        for q, v in enumerate(row):
            A[p, q] = _int(v, f"/adjacency/{p}/{q}", minimum=0, maximum=n_c)

    regions = []
    for p, r in enumerate(regions_raw):
        r = _obj(r, f"/regions/{p}")
        if "halfspaces" not in r:
            raise SchemaError(f"/regions/{p}/halfspaces", "missing required field")
        hs = []
        for k, item in enumerate(_list(r["halfspaces"], f"/regions/{p}/halfspaces")):
            path = f"/regions/{p}/halfspaces/{k}"
            item = _obj(item, path)
            for key in ("i", "sigma"):
                if key not in item:
                    raise SchemaError(f"{path}/{key}", "missing required field")
            i = _int(item["i"], f"{path}/i", minimum=1, maximum=n_c)
            b = _int(item["sigma"], f"{path}/sigma", minimum=0, maximum=1)
            hs.append((i, b))
        regions.append(Region(p, tuple(hs)))

    modes_raw = _list(data["modes"], "/modes")
    if len(modes_raw) != P:
        raise SchemaError("/modes", f"expected {P} modes (one per region), got {len(modes_raw)}")
    modes = []
    for p, m in enumerate(modes_raw):
        m = _obj(m, f"/modes/{p}")
        for key in ("J", "K"):
            if key not in m:
                raise SchemaError(f"/modes/{p}/{key}", "missing required field")
        Jrows = _list(m["J"], f"/modes/{p}/J")
        if len(Jrows) != n:
            raise SchemaError(f"/modes/{p}/J", f"expected {n} rows")
        J = np.array([_vec(row, f"/modes/{p}/J/{k}", d) for k, row in enumerate(Jrows)])
        K = _vec(m["K"], f"/modes/{p}/K", n)
        modes.append(AffineMode(J.reshape(n, d), K))

    if not isinstance(data["continuity"], bool):
        raise SchemaError("/continuity", "must be a boolean")
    meta_raw = _obj(data["metadata"], "/metadata")
    meta = {}
    for key, kind in (("seed", int), ("nc", int), ("P", int), ("gamma", float),
                      ("max_rel_err", float)):
        if key not in meta_raw:
            raise SchemaError(f"/metadata/{key}", "missing required field")
        v = meta_raw[key]
        if kind is int:
            meta[key] = _int(v, f"/metadata/{key}")
        else:
            meta[key] = _num(v, f"/metadata/{key}")
    meta["tool_version"] = str(meta_raw.get("tool_version", __version__))

    return PwaModel(domain, H, S, A, regions, modes, data["continuity"], meta)


def _obj(v, path):
    if not isinstance(v, dict):
        raise SchemaError(path, "expected an object")
    return v


def _list(v, path):
    if not isinstance(v, list):
        raise SchemaError(path, "expected an array")
    return v


def _num(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise SchemaError(path, "expected a finite number")
    return float(v)


def _int(v, path, minimum=None, maximum=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaError(path, "expected an integer")
    if (minimum is not None and v < minimum) or (maximum is not None and v > maximum):
        raise SchemaError(path, f"integer {v} out of range")
    return v


def _vec(v, path, size):
    v = _list(v, path)
    if len(v) != size:
        raise SchemaError(path, f"expected {size} numbers, got {len(v)}")
    return np.array([_num(x, f"{path}/{k}") for k, x in enumerate(v)])
