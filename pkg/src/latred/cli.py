"""Command-line entry point: ``latred <command> [options]``.

Exit status is 0 on success, 1 on a usage or input error and 2 when
``verify`` finds a violated property.
"""

from __future__ import annotations

import argparse
import logging
import sys

from latred import harness
from latred.checks import run_checks
from latred.core import Lattice, derive_seed
from latred.perturbation import pr_maximize, pr_minimize
from latred.reduction import MAX, MIN, reduce
from latred.solvers import SOLVERS, brute_force_optima, solve

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _instance_args(p):
    g = p.add_argument_group("instance")
    g.add_argument("--family", choices=harness.FAMILIES, help="generate a random instance of this family")
    g.add_argument("--n", type=int, help="ground set size for --family")
    g.add_argument("--seed", type=int, default=0, help="instance seed (default 0)")
    g.add_argument("--instance", help="directory written by 'latred gen'")
    g.add_argument("--features", help="CSV of feature rows; builds an RBF log-determinant instance")
    g.add_argument("--gamma", type=float, default=harness.LOGDET_GAMMA, help="RBF bandwidth for --features")


def _load(args):
    sources = [s for s in (args.instance, args.features, args.family) if s]
    if len(sources) != 1:
        raise UsageError("give exactly one of --instance, --features or --family")
    if args.instance:
        return harness.load_instance(args.instance)
    if args.features:
        return harness.features_instance(args.features, args.gamma)
    if args.n is None:
        raise UsageError("--family needs --n")
    return harness.generate_instance(args.family, args.n, args.seed)


def _mode_arg(p, default=MAX):
    p.add_argument("--mode", choices=(MIN, MAX), default=default)


def _sweep_args(p):
    p.add_argument("--config", help="key = value experiment file; flags override it")
    p.add_argument("--family", help="comma-separated families (default: four sweep families for max, logdet and half-products for min)")
    p.add_argument("--n", type=int)
    p.add_argument("--cases", type=int)
    p.add_argument("--grid", help="comma-separated scale grid")
    p.add_argument("--absolute", action="store_true", help="grid holds absolute scales t instead of P(t) ratios")
    p.add_argument("--draws", type=int)
    p.add_argument("--mode", choices=(MIN, MAX))
    p.add_argument("--seed", type=int, dest="master_seed", help="master seed")
    p.add_argument("--out", help="aggregate CSV path ('-' for stdout, the default)")
    p.add_argument("--raw", help="also write per-run rows to this path")
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock columns")


def _config(args, **extra):
    over = {
        "families": args.family,
        "n": args.n,
        "cases": args.cases,
        "grid": args.grid,
        "draws": args.draws,
        "mode": args.mode,
        "master_seed": args.master_seed,
        "out": args.out,
        **extra,
    }
    if args.absolute:
        over["grid_kind"] = "absolute"
    if args.no_timing:
        over["timing"] = False
    if args.config:
        return harness.ExperimentConfig.from_file(args.config, **over)
    return harness.ExperimentConfig(**{k: v for k, v in over.items() if v is not None})


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="latred", description="Lattice reduction and perturbation-reduction for submodular optimization.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="write a random instance to a directory")
    p.add_argument("--family", choices=harness.FAMILIES, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("reduce", help="run the deterministic reduction and print its trace")
    _instance_args(p)
    _mode_arg(p)
    p.add_argument("--out", help="CSV path (default stdout)")

    p = sub.add_parser("perturb-reduce", help="perturbation-reduction followed by an inner solver")
    _instance_args(p)
    _mode_arg(p)
    scale = p.add_mutually_exclusive_group(required=True)
    scale.add_argument("--t", type=float, help="noise scale")
    scale.add_argument("--pt-ratio", type=float, help="noise scale as a ratio P(t) of the lattice margins")
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--solver", choices=SOLVERS, default="brute")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--out", help="CSV path (default stdout)")

    p = sub.add_parser("solve", help="solve an instance directly")
    _instance_args(p)
    _mode_arg(p)
    p.add_argument("--solver", choices=SOLVERS, default="brute")
    p.add_argument("--solver-seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--out", help="CSV path (default stdout)")

    p = sub.add_parser("sweep-reduction", help="average reduction rates over a scale grid")
    _sweep_args(p)

    p = sub.add_parser("sweep-opt", help="perturbation-reduction against a baseline over a scale grid")
    _sweep_args(p)
    p.add_argument("--solver", choices=SOLVERS)
    p.add_argument("--baseline", choices=SOLVERS, help="baseline solver (default: same as --solver)")
    p.add_argument("--trials", type=int)

    p = sub.add_parser("verify", help="run property checks on random instances")
    p.add_argument("--family", help="comma-separated families (default all)")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--cases", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t", help="comma-separated noise scales for the loss checks", default="0.1,0.5,1.0,2.0")
    p.add_argument("--draws", type=int, default=200, help="Monte Carlo draws for --bounds-out")
    p.add_argument("--bounds-out", help="write bound-vs-empirical rows to this CSV")
    return parser


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc


def cmd_gen(args):
    f = harness.generate_instance(args.family, args.n, args.seed)
    d = harness.save_instance(f, args.out)
    print(d)


def cmd_reduce(args):
    f = _load(args)
    L, trace = reduce(f, Lattice.full(f.n), args.mode)
    rows = [{**r, "rate": repr(r["rate"]), "X": "", "Y": ""} for r in trace.rows()]
    for row, lat in zip(rows, trace.lattices):
        row["X"], row["Y"] = lat.lower.serialize(), lat.upper.serialize()
    harness.write_csv(args.out, "reduce", rows, ["iter", "|X_t|", "|Y_t|", "|U_t|", "|D_t|", "rate", "X", "Y"])


def cmd_perturb_reduce(args):
    f = _load(args)
    if args.t is not None:
        if args.t < 0:
            raise UsageError("--t must be nonnegative")
        t, ratio = args.t, ""
    else:
        L, stats = harness.prepare_case(f, args.mode)
        if stats is None or stats.Mx == stats.m:
            raise UsageError("P(t) is undefined here: the lattice is a point or its margins are degenerate")
        t = max(0.0, stats.m + args.pt_ratio * (stats.Mx - stats.m))
        ratio = repr(args.pt_ratio)
    run = pr_minimize if args.mode == MIN else pr_maximize
    res = run(f, None, t, args.noise_seed, args.solver, trials=args.trials, inner_seed=args.noise_seed)
    row = {
        "mode": args.mode,
        "t": repr(float(t)),
        "P(t)": ratio,
        "solver": args.solver,
        "value": repr(res.value),
        "set": res.solution.serialize(),
        "step1_width": res.step1_lattice.width,
        "final_width": res.lattice.width,
        "rate": repr(res.rate),
        "evals": res.evals,
        "marginals": res.marginals,
        "seconds": f"{res.seconds:.6f}",
    }
    harness.write_csv(args.out, "perturb-reduce", [row])


def cmd_solve(args):
    f = _load(args)
    rep = solve(args.solver, f, None, args.mode, args.solver_seed, args.trials)
    harness.write_csv(args.out, "solve", [{"mode": args.mode, **rep.row()}])


def _write_sweep(cfg, args, kind, agg, raw):
    harness.write_csv(cfg.out, kind, agg)
    if args.raw:
        harness.write_csv(args.raw, kind + "-raw", raw)


def cmd_sweep_reduction(args):
    cfg = _config(args)
    agg, raw = harness.run_reduction_sweep(cfg)
    _write_sweep(cfg, args, "reduction", agg, raw)


def cmd_sweep_opt(args):
    cfg = _config(args, solver=args.solver, baseline=args.baseline, trials=args.trials)
    agg, raw = harness.run_opt_experiment(cfg)
    _write_sweep(cfg, args, "opt", agg, raw)


def cmd_verify(args):
    fams = args.family.split(",") if args.family else list(harness.FAMILIES)
    for fam in fams:
        if fam not in harness.FAMILIES:
            raise UsageError(f"unknown family {fam!r}")
    if not 2 <= args.n <= 14:
        raise UsageError("verify enumerates every subset; use 2 <= --n <= 14")
    ts = _floats(args.t)
    instances = []
    for fi, fam in enumerate(fams):
        for case in range(args.cases):
            f = harness.generate_instance(fam, args.n, derive_seed(args.seed, fi, case))
            instances.append((f"{fam}#{case}", f))
    violations, count = run_checks(instances, ts, args.seed)
    if args.bounds_out:
        from latred.bounds import bound_rows

        rows = []
        for i, (name, f) in enumerate(instances):
            optima, best = brute_force_optima(f, MAX)
            L = Lattice.full(f.n)
            rows.extend(bound_rows(name, f, L, ts, args.draws, derive_seed(args.seed, 9, i), optima[0], best, MAX))
        harness.write_csv(args.bounds_out, "bounds", rows)
    for v in violations:
        print("VIOLATION", v)
    print(f"{count} checks on {len(instances)} instances, {len(violations)} violations", file=sys.stderr)
    return EXIT_VIOLATION if violations else EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "reduce": cmd_reduce,
    "perturb-reduce": cmd_perturb_reduce,
    "solve": cmd_solve,
    "sweep-reduction": cmd_sweep_reduction,
    "sweep-opt": cmd_sweep_opt,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args) or EXIT_OK
    except (UsageError, ValueError, OSError, KeyError) as exc:
        print(f"latred {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
