"""Genetic search over cut angles and the cut-escalation loop.

For a fixed number of cuts the GA minimizes ``gamma + lambda * P`` (plus
penalties for degenerate or under-sampled partitions).  The outer loop
adds one cut at a time until the error metric meets the tolerance.
"""

from __future__ import annotations

import logging
import multiprocessing
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from pwacut import __version__
from pwacut.errors import EvaluationFailure, NumericalFailure
from pwacut.fitting import Design, SampleSet, fit_continuous, fit_unconstrained, sample_domain
from pwacut.geometry import (
    AngleGenome,
    CutArrangement,
    Domain,
    angle_bounds,
    cartesian_to_spherical,
    decode_genome,
    enclosing_hypersphere,
)
from pwacut.model import PwaModel
from pwacut.partition import chambers, locate_many, regions

log = logging.getLogger(__name__)

DEGENERATE_PENALTY = 1e3
UNDERSAMPLED_PENALTY = 10.0
TOURNAMENT_SIZE = 3
# share of the initial population seeded from the previous best genome
WARM_FRACTION = 0.5
# fitness is at least lam (one region, no penalties); within this slack nothing can improve
OPTIMUM_SLACK = 1e-24


@dataclass
class SearchConfig:
    lam: float = 1e-3
    population: int = 50
    generations: int = 60
    mutation_sigma: float = 0.15
    crossover_rate: float = 0.7
    elitism: int = 2
    seed: int = 42
    tol_err: float = 0.05
    max_iter: int = 10
    samples_n: int = 5000
    continuity: bool = False
    nc_limit: int = 20
    metric: str = "max"
    warm_start: bool = True
    # per-gene mutation probability; None means one gene per child on average
    mutation_rate: float | None = None
    workers: int | None = None
    progress: bool = False

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be at least 2")
        if not 0.0 < self.tol_err < 1.0:
            raise ValueError("tol_err must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.generations < 1 or self.samples_n < 1:
            raise ValueError("generations and samples_n must be positive")
        if not 0 <= self.elitism < self.population:
            raise ValueError("elitism must lie in [0, population)")
        if self.metric not in ("max", "gamma"):
            raise ValueError("metric must be 'max' or 'gamma'")


@dataclass
class SearchOutcome:
    model: PwaModel
    gamma: float
    max_rel_err: float
    n_c: int
    P: int
    history: list = field(default_factory=list)
    tolerance_met: bool = True
    genome: np.ndarray | None = None


@dataclass
class Evaluation:
    fitness: float
    gamma: float
    max_rel_err: float
    P: int
    n_degenerate: int
    arrangement: CutArrangement | None = None
    sigma: np.ndarray | None = None
    adjacency: np.ndarray | None = None
    regions: list | None = None
    fit: object = None


class SearchContext:
    """Immutable inputs shared by every fitness evaluation."""

    def __init__(self, domain: Domain, samples: SampleSet, config: SearchConfig):
        self.domain = domain
        self.sphere = enclosing_hypersphere(domain)
        self.samples = samples
        self.config = config
        self.design = Design(samples, domain)


def partition_and_fit(H, ctx: SearchContext):
    """Chambers, regions and the lower-level fit for explicit hyperplanes."""
    S = chambers(H, ctx.domain, samples=ctx.samples.points, nc_limit=ctx.config.nc_limit)
    regs, A, P = regions(H, S)
    assign = locate_many(H, S, ctx.samples.points)
    if ctx.config.continuity:
        fit = fit_continuous(ctx.samples, P, A, H, assign, ctx.domain, ctx.design)
    else:
        fit = fit_unconstrained(ctx.samples, P, assign, ctx.domain, ctx.design)
    return S, A, regs, fit


def evaluate_genome(genome, ctx: SearchContext, keep: bool = False) -> Evaluation:
    """Fitness of one genome; lower is better.

    Degenerate cuts are dropped from the partition and cost a fixed
    penalty each; under-sampled regions add a penalty proportional to
    their share.  Failures never propagate.
    """
    angles = genome.angles if isinstance(genome, AngleGenome) else np.asarray(genome)
    arr = decode_genome(AngleGenome(angles), ctx.sphere)
    H = arr.hyperplanes[~arr.degenerate]
    n_deg = int(arr.degenerate.sum())
    try:
        S, A, regs, fit = partition_and_fit(H, ctx)
    except NumericalFailure as exc:
        log.warning("partition failed (%s); genome penalized", exc)
        return Evaluation(np.inf, np.inf, np.inf, 0, n_deg)
    P = S.shape[1]
    under = float(np.mean(fit.undersampled))
    fitness = (fit.gamma + ctx.config.lam * P + DEGENERATE_PENALTY * n_deg
               + UNDERSAMPLED_PENALTY * under)
    ev = Evaluation(fitness, fit.gamma, fit.max_rel_err, P, n_deg)
    if keep:
        ev.arrangement = CutArrangement(H, genome=angles)
        ev.sigma, ev.adjacency, ev.regions, ev.fit = S, A, regs, fit
    return ev


# -- GA -------------------------------------------------------------------------

_WORKER_CTX = None


def _worker_init(ctx):
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _worker_eval(angles):
    ev = evaluate_genome(angles, _WORKER_CTX)
    return ev.fitness, ev.gamma, ev.max_rel_err, ev.P


def worker_count(config: SearchConfig) -> int:
    if config.workers is not None:
        return max(1, int(config.workers))
    env = os.environ.get("PWACUT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer PWACUT_THREADS=%r", env)
    return 1


class _Evaluator:
    """Cached, optionally parallel fitness evaluation."""

    def __init__(self, ctx: SearchContext):
        self.ctx = ctx
        self.cache = {}
        self.pool = None
        n = worker_count(ctx.config)
        if n > 1:
            mp = multiprocessing.get_context("fork")
            self.pool = mp.Pool(n, initializer=_worker_init, initargs=(ctx,))

    def close(self):
        if self.pool is not None:
            self.pool.close()
            self.pool.join()
            self.pool = None

    def __call__(self, population):
        keys = [g.tobytes() for g in population]
        todo, seen = [], set()
        for k, g in zip(keys, population):
            if k not in self.cache and k not in seen:
                seen.add(k)
                todo.append((k, g))
        if todo:
            if self.pool is not None:
                results = self.pool.map(_worker_eval, [g for _, g in todo])
            else:
                results = []
                for _, g in todo:
                    ev = evaluate_genome(g, self.ctx)
                    results.append((ev.fitness, ev.gamma, ev.max_rel_err, ev.P))
            for (k, _), r in zip(todo, results):
                self.cache[k] = r
        return [self.cache[k] for k in keys]


def random_genome(rng, n_c: int, d: int) -> np.ndarray:
    lo, hi = angle_bounds(d)
    return rng.uniform(lo, hi, size=(n_c, d, d - 1))


def null_cut(domain: Domain) -> np.ndarray:
    """Angles of ``d`` sphere points whose hyperplane misses the box.

    The points sit on a small ring around the face direction with the most
    clearance, so the cut is parallel to that face and outside the box.
    """
    d = domain.dim
    rho = enclosing_hypersphere(domain).radius
    hw = domain.half_width
    j = int(np.argmax(rho - hw))
    cos_delta = (rho + hw[j]) / (2.0 * rho)
    sin_delta = np.sqrt(1.0 - cos_delta**2)
    # regular simplex vertices in the complement of axis j
    simplex = np.eye(d) - 1.0 / d
    basis = np.linalg.svd(simplex)[2][: d - 1]
    ring = simplex @ basis.T
    ring /= np.linalg.norm(ring, axis=1, keepdims=True)
    others = [k for k in range(d) if k != j]
    pts = np.zeros((d, d))
    pts[:, j] = rho * cos_delta
    pts[:, others] = rho * sin_delta * ring
    return np.array([cartesian_to_spherical(p) for p in pts])


def _mutate(rng, genome, config: SearchConfig):
    n_c, d, _ = genome.shape
    lo, hi = angle_bounds(d)
    rate = config.mutation_rate
    if rate is None:
        rate = 1.0 / genome.size
    mask = rng.random(genome.shape) < rate
    noise = rng.normal(0.0, config.mutation_sigma, size=genome.shape)
    out = genome + mask * noise
    # polar angles are clipped, the azimuth wraps around
    out[..., :-1] = np.clip(out[..., :-1], lo[:-1], hi[:-1])
    out[..., -1] = np.mod(out[..., -1], 2.0 * np.pi)
    return out


def _crossover(rng, a, b, config: SearchConfig):
    if rng.random() >= config.crossover_rate:
        return a.copy()
    take = rng.random(a.shape[0]) < 0.5
    return np.where(take[:, None, None], a, b)


def _tournament(rng, fitness):
    picks = rng.integers(0, len(fitness), size=TOURNAMENT_SIZE)
    # lowest fitness wins; ties go to the lowest index
    return int(min(picks, key=lambda i: (fitness[i], i)))


def ga_optimize(n_c: int, ctx: SearchContext, warm: np.ndarray | None = None,
                history: list | None = None):
    """Run the GA for a fixed cut count.

    Returns ``(best_genome, evaluation)``; the evaluation carries the full
    partition and fit of the best genome.
    """
    if n_c < 1:
        raise ValueError("n_c must be at least 1")
    cfg = ctx.config
    d = ctx.domain.dim
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, n_c]))
    pop = [random_genome(rng, n_c, d) for _ in range(cfg.population)]
    if warm is not None and cfg.warm_start:
        warm = np.asarray(warm)
        if warm.shape[0] == n_c - 1:
            pop[0] = np.concatenate([warm, null_cut(ctx.domain)[None]], axis=0)
            n_warm = max(2, int(WARM_FRACTION * cfg.population))
            for k in range(1, min(n_warm, cfg.population)):
                pop[k] = np.concatenate([warm, random_genome(rng, 1, d)], axis=0)
        elif warm.shape[0] == n_c:
            pop[0] = warm.copy()

    evaluator = _Evaluator(ctx)
    try:
        for gen in range(cfg.generations + 1):
            scores = evaluator(pop)
            fitness = [s[0] for s in scores]
            order = sorted(range(len(pop)), key=lambda i: (fitness[i], i))
            best = order[0]
            record = {"n_c": n_c, "generation": gen, "fitness": fitness[best],
                      "gamma": scores[best][1], "max_rel_err": scores[best][2],
                      "P": scores[best][3]}
            if history is not None:
                history.append(record)
            if cfg.progress:
                print(f"n_c={n_c} gen={gen} fitness={fitness[best]:.6g} "
                      f"gamma={scores[best][1]:.6g} P={scores[best][3]}",
                      file=sys.stderr)
            if gen == cfg.generations or fitness[best] <= cfg.lam + OPTIMUM_SLACK:
                break
            nxt = [pop[i].copy() for i in order[: cfg.elitism]]
            while len(nxt) < cfg.population:
                a = pop[_tournament(rng, fitness)]
                b = pop[_tournament(rng, fitness)]
                child = _mutate(rng, _crossover(rng, a, b, cfg), cfg)
                nxt.append(child)
            pop = nxt
    finally:
        evaluator.close()
    genome = pop[best]
    return genome, evaluate_genome(genome, ctx, keep=True)


# -- outer loop -----------------------------------------------------------------


def build_model(ev: Evaluation, ctx: SearchContext) -> PwaModel:
    meta = {"seed": ctx.config.seed, "nc": ev.arrangement.n_cuts, "P": ev.P,
            "gamma": ev.gamma, "max_rel_err": ev.max_rel_err, "tool_version": __version__}
    return PwaModel(ctx.domain, ev.arrangement.hyperplanes, ev.sigma, ev.adjacency,
                    ev.regions, ev.fit.modes, ctx.config.continuity, meta)


def approximate(F, domain: Domain, config: SearchConfig | None = None) -> SearchOutcome:
    """Add cuts one at a time until the error metric meets ``config.tol_err``.

    ``F`` maps an ``(N, d)`` array of original-frame points to ``(N, n)``
    values.  When ``max_iter`` cut counts have been tried without meeting
    the tolerance, the best model so far is returned with
    ``tolerance_met=False``.

    Raises:
        EvaluationFailure: ``F`` produced a non-finite value on a sample.
    """
    config = config or SearchConfig()
    if domain.dim < 2:
        raise ValueError("the cut search needs a domain of dimension at least 2")
    samples = sample_domain(domain, config.samples_n, config.seed, F)
    bad = ~np.all(np.isfinite(samples.values), axis=1)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise EvaluationFailure(domain.to_original(samples.points[k]))
    ctx = SearchContext(domain, samples, config)

    history = []
    best = None  # (metric, n_c, evaluation, genome)
    # the empty arrangement warm-starts n_c = 1 with a cut that misses the box
    warm = np.zeros((0, domain.dim, domain.dim - 1))
    n_c = 0
    for _ in range(config.max_iter):
        n_c += 1
        if n_c > config.nc_limit:
            break
        gens = []
        genome, ev = ga_optimize(n_c, ctx, warm, gens)
        metric = ev.max_rel_err if config.metric == "max" else ev.gamma
        history.append({"n_c": n_c, "fitness": ev.fitness, "gamma": ev.gamma,
                        "max_rel_err": ev.max_rel_err, "P": ev.P,
                        "generations": len(gens)})
        log.info("n_c=%d fitness=%.6g gamma=%.6g max_rel_err=%.6g P=%d",
                 n_c, ev.fitness, ev.gamma, ev.max_rel_err, ev.P)
        if best is None or metric < best[0]:
            best = (metric, n_c, ev, genome)
        if metric <= config.tol_err:
            break
        warm = genome
    metric, n_c_best, ev, genome = best
    met = metric <= config.tol_err
    model = build_model(ev, ctx)
    return SearchOutcome(model, ev.gamma, ev.max_rel_err, ev.arrangement.n_cuts, ev.P,
                         history, met, genome)
