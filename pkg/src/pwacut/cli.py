"""Command-line front end.

Exit codes: 0 ok, 1 usage/schema error, 2 function evaluation failure,
3 tolerance not met (best-effort model still written), 4 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from pwacut.errors import EvaluationFailure, PwaError, SchemaError, TooManyCuts
from pwacut.expr import BENCHMARKS, ExprError, EvalError, builtin, compile_function, parse
from pwacut.geometry import Domain
from pwacut.model import deserialize, evaluate, serialize, validate
from pwacut.partition import DEFAULT_NC_LIMIT, chambers, chambers_export, regions
from pwacut.search import SearchConfig, approximate

EXIT_OK, EXIT_USAGE, EXIT_EVAL, EXIT_TOL, EXIT_INVALID = 0, 1, 2, 3, 4
TABLE_TOLERANCES = (0.10, 0.05, 0.025)

log = logging.getLogger("pwacut")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


_DOMAIN_ITEM = re.compile(r"^\s*([xu])(\d+)\s*=\s*([^:]+):([^:]+)\s*$")


def parse_domain_spec(spec: str):
    """``"x1=lo:hi,...,u1=lo:hi,..."`` -> (Domain, (n_states, n_inputs), names)."""
    names, lows, highs = [], [], []
    counts = {"x": 0, "u": 0}
    for item in spec.split(","):
        m = _DOMAIN_ITEM.match(item)
        if not m:
            raise UsageError(f"bad domain entry {item.strip()!r}; expected name=lo:hi")
        kind, idx = m.group(1), int(m.group(2))
        if kind == "x" and counts["u"]:
            raise UsageError("state variables x1..xn must precede inputs u1..um")
        if idx != counts[kind] + 1:
            raise UsageError(f"expected {kind}{counts[kind] + 1}, got {kind}{idx}")
        counts[kind] += 1
        try:
            lo, hi = float(m.group(3)), float(m.group(4))
        except ValueError:
            raise UsageError(f"bad bounds in {item.strip()!r}") from None
        if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
            raise UsageError(f"empty or invalid interval in {item.strip()!r}")
        names.append(f"{kind}{idx}")
        lows.append(lo)
        highs.append(hi)
    return Domain.from_bounds(lows, highs), (counts["x"], counts["u"]), names


def _names_for(dims):
    return [f"x{k + 1}" for k in range(dims[0])] + [f"u{k + 1}" for k in range(dims[1])]


def resolve_function(args):
    """Function, domain and variable names from ``--func``/``--bench``/``--domain``."""
    if bool(args.func) == bool(args.bench):
        raise UsageError("give exactly one of --func or --bench")
    if args.bench:
        try:
            bench = builtin(args.bench)
        except ExprError as exc:
            raise UsageError(str(exc)) from None
        domain, dims = bench.domain, bench.dims
        if args.domain:
            domain, dims_given, _ = parse_domain_spec(args.domain)
            if dims_given != bench.dims:
                raise UsageError(f"--domain must declare {bench.dims[0]} states and "
                                 f"{bench.dims[1]} inputs for {bench.name}")
        return bench.function(), domain, _names_for(dims)
    if not args.domain:
        raise UsageError("--func needs --domain")
    domain, dims, names = parse_domain_spec(args.domain)
    exprs = [parse(text, dims) for text in args.func.split(";")]
    return compile_function(exprs), domain, names


def _config(args, tol=None) -> SearchConfig:
    return SearchConfig(
        lam=args.lam,
        population=args.population,
        generations=args.generations,
        seed=args.seed,
        tol_err=args.tol if tol is None else tol,
        max_iter=args.max_iter,
        samples_n=args.samples,
        continuity=args.continuity,
        nc_limit=args.nc_limit,
        metric=args.metric,
        progress=not args.quiet,
    )


def _model_extra(outcome):
    return {"tolerance_met": outcome.tolerance_met, "history": outcome.history}


def write_report(path, model, func, samples_n, seed, names):
    from pwacut.fitting import sample_domain

    samples = sample_domain(model.domain, samples_n, seed, func)
    X = model.domain.to_original(samples.points)
    F = samples.values
    f = model.predict_working(samples.points)
    rel = np.linalg.norm(F - f, axis=1) / np.sqrt(np.sum(F**2, axis=1) + 1.0)
    n = F.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["index", *names, *[f"F{j + 1}" for j in range(n)],
                    *[f"f{j + 1}" for j in range(n)], "rel_err"])
        for k in range(len(X)):
            w.writerow([k, *map(repr, X[k].tolist()), *map(repr, F[k].tolist()),
                        *map(repr, f[k].tolist()), repr(float(rel[k]))])


def write_plotdata(path, model, func, names, resolution=101):
    """Regular grid over the first two axes (other axes at the box center)."""
    lo, hi = model.domain.original_lower, model.domain.original_upper
    center = model.domain.shift
    d = model.dim
    axes = [np.linspace(lo[j], hi[j], resolution) for j in range(min(d, 2))]
    if d == 1:
        grid = axes[0][:, None]
    else:
        g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
        grid = np.tile(center, (g0.size, 1))
        grid[:, 0] = g0.ravel()
        grid[:, 1] = g1.ravel()
    F = np.asarray(func(grid), dtype=float).reshape(len(grid), -1)
    f = evaluate(model, grid)
    reg = model.locate(model.domain.to_working(grid))
    n = F.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*names, *[f"F{j + 1}" for j in range(n)],
                    *[f"f{j + 1}" for j in range(n)], "region"])
        for k in range(len(grid)):
            w.writerow([*map(repr, grid[k].tolist()), *map(repr, F[k].tolist()),
                        *map(repr, f[k].tolist()), int(reg[k])])


def cmd_approx(args):
    func, domain, names = resolve_function(args)
    outcome = approximate(func, domain, _config(args))
    model = outcome.model
    if args.out:
        Path(args.out).write_bytes(serialize(model, _model_extra(outcome)))
    if args.report:
        write_report(args.report, model, func, args.samples, args.seed, names)
    if args.plotdata:
        write_plotdata(args.plotdata, model, func, names)
    status = "met" if outcome.tolerance_met else "NOT met"
    print(f"tolerance {status}: n_c={outcome.n_c} P={outcome.P} "
          f"max_rel_err={outcome.max_rel_err:.6g} gamma={outcome.gamma:.6g}")
    return EXIT_OK if outcome.tolerance_met else EXIT_TOL


def cmd_bench(args):
    if not args.bench:
        raise UsageError("bench needs --bench")
    func, domain, _ = resolve_function(args)
    rows = []
    for tol in TABLE_TOLERANCES:
        outcome = approximate(func, domain, _config(args, tol))
        rows.append((tol, outcome))
    print(f"{'tol':>7} {'n_c':>4} {'P':>5} {'max_rel_err':>12} {'gamma':>12} met")
    for tol, o in rows:
        print(f"{tol:7.3f} {o.n_c:4d} {o.P:5d} {o.max_rel_err:12.6g} {o.gamma:12.6g} "
              f"{'yes' if o.tolerance_met else 'no'}")
    return EXIT_OK if all(o.tolerance_met for _, o in rows) else EXIT_TOL


def _load_model(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read model: {exc}") from None
    return deserialize(data)


def cmd_eval(args):
    model = _load_model(args.model)
    if not args.point:
        raise UsageError("eval needs --point")
    try:
        x = np.array([float(v) for v in args.point.split(",")])
    except ValueError:
        raise UsageError(f"bad --point {args.point!r}") from None
    if x.size != model.dim:
        raise UsageError(f"--point needs {model.dim} values")
    y = evaluate(model, x)
    print(",".join(repr(float(v)) for v in y))
    return EXIT_OK


def cmd_validate(args):
    model = _load_model(args.model)
    func = None
    if args.func or args.bench:
        func, _, _ = resolve_function(args)
    report = validate(model, args.samples, args.seed, func)
    print(json.dumps(report, indent=1))
    return EXIT_OK if report["passed"] else EXIT_INVALID


def load_cuts(path, domain: Domain):
    """Hyperplanes from a JSON file, mapped into the domain's working frame."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read cuts file: {exc}") from None
    if isinstance(data, dict):
        data = data.get("hyperplanes")
    d = domain.dim
    if (not isinstance(data, list)
            or not all(isinstance(h, list) and len(h) == d for h in data)
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                       for h in data for v in h)):
        raise UsageError(f"cuts file must hold a list of {d}-vectors")
    H = np.array(data, dtype=float).reshape(-1, d)
    # h @ (x_w + shift) = 1  <=>  (h / (1 - h @ shift)) @ x_w = 1
    offset = 1.0 - H @ domain.shift
    if np.any(np.abs(offset) < 1e-12):
        raise UsageError("a cut passes through the domain center; not representable")
    return H / offset[:, None]


def cmd_chambers(args):
    if not args.cuts or not args.domain:
        raise UsageError("chambers needs --cuts and --domain")
    domain, _, _ = parse_domain_spec(args.domain)
    H = load_cuts(args.cuts, domain)
    if H.shape[0] > args.nc_limit:
        raise TooManyCuts(f"{H.shape[0]} cuts exceed the limit of {args.nc_limit}")
    S = chambers(H, domain, nc_limit=args.nc_limit)
    regs, A, P = regions(H, S)
    out = chambers_export(S, A)
    out["regions"] = [{"halfspaces": [{"i": i, "sigma": b} for i, b in r.halfspaces]}
                      for r in regs]
    print(json.dumps(out))
    return EXIT_OK


def build_parser():
    p = _Parser(prog="pwacut", description="Cut-based piecewise-affine approximation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, search=True):
        sp.add_argument("--func", help="expression(s), ';'-separated per output")
        sp.add_argument("--bench", help=f"builtin benchmark: {', '.join(sorted(BENCHMARKS))}")
        sp.add_argument("--domain", help='box spec, e.g. "x1=-2:2,u1=-2:2"')
        sp.add_argument("--seed", type=int, default=42)
        sp.add_argument("--samples", type=int, default=5000)
        if search:
            sp.add_argument("--tol", type=float, default=0.05)
            sp.add_argument("--metric", choices=("max", "gamma"), default="max")
            sp.add_argument("--continuity", action="store_true")
            sp.add_argument("--lambda", dest="lam", type=float, default=1e-3)
            sp.add_argument("--population", type=int, default=50)
            sp.add_argument("--generations", type=int, default=60)
            sp.add_argument("--max-iter", type=int, default=10)
            sp.add_argument("--nc-limit", type=int, default=DEFAULT_NC_LIMIT)
            sp.add_argument("--quiet", action="store_true", help="no per-generation progress")

    sp = sub.add_parser("approx", help="approximate a function")
    common(sp)
    sp.add_argument("--out", help="model JSON output path")
    sp.add_argument("--report", help="per-sample error CSV")
    sp.add_argument("--plotdata", help="101x101 grid CSV of F, f and region ids")
    sp.set_defaults(handler=cmd_approx)

    sp = sub.add_parser("bench", help="run a benchmark at the 10%%/5%%/2.5%% tolerances")
    common(sp)
    sp.set_defaults(handler=cmd_bench)

    sp = sub.add_parser("eval", help="evaluate a model at a point")
    sp.add_argument("--model", required=True)
    sp.add_argument("--point", help="comma-separated coordinates")
    sp.set_defaults(handler=cmd_eval)

    sp = sub.add_parser("validate", help="check a model's partition and continuity")
    sp.add_argument("--model", required=True)
    common(sp, search=False)
    sp.set_defaults(handler=cmd_validate)

    sp = sub.add_parser("chambers", help="enumerate chambers of explicit cuts")
    sp.add_argument("--cuts", help="JSON list of hyperplane coefficient vectors")
    sp.add_argument("--domain")
    sp.add_argument("--nc-limit", type=int, default=DEFAULT_NC_LIMIT)
    sp.set_defaults(handler=cmd_chambers)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (UsageError, SchemaError, TooManyCuts) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EvalError, EvaluationFailure) as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except ExprError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PwaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
