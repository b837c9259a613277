"""Command line front end.

Subcommands:

  prox       evaluate the penalty prox at one point and print the result
  solve      run a single solver on a generated or file-loaded instance
  construct  plant known stationary points and write the instances to disk
  bench      run a benchmark campaign: CSV results, metadata, figures

Every subcommand accepts --config FILE, a flat key=value file whose keys
are long option names (dashes or underscores); values become defaults and
explicit flags override them.  Unknown keys are rejected.

Exit codes: 0 clean, 2 when some trials failed or instances were
discarded, 1 on fatal errors (bad inputs, stepsize violations).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import bench, plots
from .bench import ExperimentSpec, trial_seed
from .construct import construct_instance
from .problems import (
    ConvergenceError,
    ProblemInstance,
    gen_sparse_signal,
    load_matrix_csv,
    load_vector_csv,
    make_instance,
    save_matrix_csv,
)
from .prox import PenaltySpec, prox_l1_al2
from .solvers import METHODS, SCHEDULE_KINDS, ScheduleSpec, SolverConfig, l1_init, solve

FAMILIES = ("gaussian", "partial_dct", "odct")


def _fmt(v):
    return f"{v:.10g}"


def _parse_floats(text):
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated number list, got {text!r}")


def _parse_names(text):
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _parse_schedule(text):
    """Parse 'kind' or 'kind:key=val,key=val' into a ScheduleSpec."""
    kind, _, tail = text.partition(":")
    if kind not in SCHEDULE_KINDS:
        raise argparse.ArgumentTypeError(
            f"schedule kind must be one of {SCHEDULE_KINDS}, got {kind!r}"
        )
    kwargs = {}
    if tail:
        for item in tail.split(","):
            key, sep, val = item.partition("=")
            if not sep:
                raise argparse.ArgumentTypeError(f"bad schedule parameter {item!r}")
            if key not in ("value", "slope", "cap", "a", "r"):
                raise argparse.ArgumentTypeError(f"unknown schedule parameter {key!r}")
            try:
                kwargs[key] = float(val)
            except ValueError:
                raise argparse.ArgumentTypeError(f"bad schedule value {item!r}")
    try:
        return ScheduleSpec(kind=kind, **kwargs)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _family_to_spec(name):
    # bench speaks "oversampled_dct"; the flag keeps the short form
    return "oversampled_dct" if name == "odct" else name


def _gen_family_matrix(family, m, n, F, seed):
    spec = ExperimentSpec(
        kind="success",
        matrix_family=_family_to_spec(family),
        m=m,
        n=n,
        F=F,
        sweep=(1,),
        trials=1,
        master_seed=0,
    )
    return bench._gen_matrix(spec, seed)


def _print_err(msg):
    print(f"error: {msg}", file=sys.stderr)


# ---------------------------------------------------------------------------
# config files


def _read_config(path):
    pairs = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, val = line.partition("=")
                if not sep:
                    raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
                pairs[key.strip()] = val.strip()
    except OSError as e:
        raise ValueError(f"cannot read config {path}: {e}")
    return pairs


_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off"}


def _apply_config(parser, pairs):
    """Install config values as parser defaults; flags still override."""
    by_dest = {}
    for action in parser._actions:
        if action.dest not in ("help", "config", "command", "kind"):
            by_dest[action.dest] = action
    defaults = {}
    for key, text in pairs.items():
        dest = key.replace("-", "_")
        action = by_dest.get(dest)
        if action is None:
            raise ValueError(f"unknown config key {key!r}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            low = text.lower()
            if low in _TRUE_WORDS:
                defaults[dest] = True
            elif low in _FALSE_WORDS:
                defaults[dest] = False
            else:
                raise ValueError(f"config key {key!r} expects a boolean, got {text!r}")
        elif action.choices is not None and text not in action.choices:
            raise ValueError(
                f"config key {key!r} must be one of {tuple(action.choices)}, got {text!r}"
            )
        elif action.type is not None:
            try:
                defaults[dest] = action.type(text)
            except (ValueError, argparse.ArgumentTypeError) as e:
                raise ValueError(f"config key {key!r}: {e}")
        else:
            defaults[dest] = text
    parser.set_defaults(**defaults)


def _peek_config(argv):
    """Extract the subcommand name and --config path before real parsing."""
    command = None
    path = None
    it = iter(range(len(argv)))
    for i in it:
        tok = argv[i]
        if tok == "--config":
            if i + 1 < len(argv):
                path = argv[i + 1]
                next(it, None)
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
        elif command is None and not tok.startswith("-"):
            command = tok
    return command, path


# ---------------------------------------------------------------------------
# prox


def cmd_prox(args):
    y = np.array(_parse_floats(args.y), dtype=float)
    res = prox_l1_al2(y, args.lam, args.alpha, tie_rule=args.tie)
    parts = ",".join(_fmt(v) for v in res.x)
    line = f"x={parts} case={res.case_id} unique={'true' if res.is_unique else 'false'}"
    if args.tie == "report-all-maxima" and res.tie_indices:
        line += " ties=" + ",".join(str(i) for i in res.tie_indices)
    print(line)
    return 0


# ---------------------------------------------------------------------------
# solve


def _load_instance(args, penalty):
    if args.matrix is not None:
        if args.rhs is None:
            raise ValueError("--matrix requires --rhs")
        A = load_matrix_csv(args.matrix)
        b = load_vector_csv(args.rhs)
        x_true = load_vector_csv(args.truth) if args.truth is not None else None
        return ProblemInstance(A=A, b=b, penalty=penalty, x_true=x_true, sigma=args.sigma)
    if args.rhs is not None or args.truth is not None:
        raise ValueError("--rhs/--truth need --matrix")
    ss = np.random.SeedSequence(args.seed).spawn(3)
    A = _gen_family_matrix(args.family, args.m, args.n, args.F, ss[0])
    x_true, _ = gen_sparse_signal(args.n, args.sparsity, ss[1])
    return make_instance(A, x_true, args.sigma, penalty, seed=ss[2])


def cmd_solve(args):
    penalty = PenaltySpec(alpha=args.alpha, gamma=args.gamma)
    p = _load_instance(args, penalty)
    cfg = SolverConfig(
        method=args.method,
        lam=args.lam,
        delta=args.delta,
        tol=args.tol,
        max_iter_factor=args.max_iter_factor,
        alpha_schedule=args.alpha_schedule,
        gamma_schedule=args.gamma_schedule,
    )
    if args.cold:
        if args.method == "dca":
            raise ValueError("dca requires a nonzero starting point, drop --cold")
        x0 = np.zeros(p.shape[1])
    else:
        x0 = l1_init(p, args.gamma)
    trace = solve(p, cfg, x0=x0)

    if args.out is not None:
        save_matrix_csv(args.out, trace.x)
    if args.trace is not None:
        bench.write_trace_csv(trace, args.trace)

    flag = "true" if trace.converged else "false"
    tail = f"iterations={trace.iterations} matvecs={trace.matvecs[-1]} converged={flag}"
    if p.x_true is not None:
        rel = np.linalg.norm(trace.x - p.x_true) / np.linalg.norm(p.x_true)
        print(f"rel_err={rel:.9g} {tail}")
    else:
        print(f"objective={trace.objective[-1]:.9g} {tail}")
    return 0 if trace.converged else 2


# ---------------------------------------------------------------------------
# construct


def cmd_construct(args):
    penalty = PenaltySpec(alpha=args.alpha, gamma=args.gamma)
    os.makedirs(args.out_dir, exist_ok=True)
    manifest = ["trial,seed,kept,pocs_iterations,range_residual"]
    kept = discarded = 0
    for t in range(args.trials):
        seed = trial_seed(args.seed, args.gamma, t)
        ss = np.random.SeedSequence(seed).spawn(2)
        A = _gen_family_matrix(args.family, args.m, args.n, args.F, ss[0])
        x_star, _ = gen_sparse_signal(args.n, args.sparsity, ss[1])
        try:
            p, res = construct_instance(A, x_star, args.lam, penalty)
        except bench._TRIAL_ERRORS as e:
            # degenerate draw (rank-deficient matrix, infeasible plant)
            _print_err(f"trial {t} discarded: {e}")
            manifest.append(f"{t},{seed},false,0,nan")
            discarded += 1
            continue
        manifest.append(
            f"{t},{seed},{'true' if res.converged else 'false'},"
            f"{res.pocs_iterations},{res.range_residual:.9g}"
        )
        if not res.converged:
            _print_err(
                f"trial {t} discarded: alternating projections stalled "
                f"(range residual {res.range_residual:.3g})"
            )
            discarded += 1
            continue
        kept += 1
        save_matrix_csv(os.path.join(args.out_dir, f"A_{t}.csv"), p.A)
        save_matrix_csv(os.path.join(args.out_dir, f"b_{t}.csv"), p.b)
        save_matrix_csv(os.path.join(args.out_dir, f"x_{t}.csv"), p.x_true)
    with open(os.path.join(args.out_dir, "manifest.csv"), "w") as fh:
        fh.write("\n".join(manifest) + "\n")
    print(f"kept={kept} discarded={discarded}")
    return 2 if discarded else 0


# ---------------------------------------------------------------------------
# bench


_DEFAULT_SWEEPS = {
    "success": (2, 6, 10, 14, 18, 22, 26, 30),
    "constructed": (0.1, 0.01, 0.001),
    "noisy": (238, 250, 276, 300),
}


def _bench_spec(args):
    sweep = args.sweep
    if sweep is None:
        if args.kind == "success" and args.sparsity is not None:
            sweep = (args.sparsity,)
        else:
            sweep = _DEFAULT_SWEEPS[args.kind]
    kwargs = dict(
        kind=args.kind,
        matrix_family=_family_to_spec(args.family),
        m=args.m,
        n=args.n,
        F=args.F,
        sweep=sweep,
        trials=args.trials,
        master_seed=args.seed,
        sigma=args.sigma,
    )
    if args.methods is not None:
        kwargs["methods"] = args.methods
    if args.kind != "success" and args.sparsity is not None:
        kwargs["sparsity"] = args.sparsity
    return ExperimentSpec(**kwargs)


def _bench_summary(kind, table):
    if kind == "success":
        rates = [r.success for r in table.rows]
        return f"success_rate={np.mean(rates):.2f}"
    if kind == "constructed":
        errs = [r.rel_err for r in table.rows if r.success and np.isfinite(r.rel_err)]
        mean = float(np.mean(errs)) if errs else float("nan")
        discarded = table.metadata.get("discarded", "0")
        return f"mean_rel_err={mean:.3g} discarded={discarded}"
    scale = float(table.metadata.get("calibration_scale", "nan"))
    means = bench.mean_mse(table, calibrated=np.isfinite(scale))
    sweeps = sorted({sv for sv, _ in means})
    anchor = bench.ORACLE_ANCHOR_SWEEP if bench.ORACLE_ANCHOR_SWEEP in sweeps else sweeps[0]
    pairs = [
        f"{name}={val:.3g}" for (sv, name), val in sorted(means.items()) if sv == anchor
    ]
    return f"mean_mse[sweep={anchor:g}] " + " ".join(pairs)


def cmd_bench(args):
    spec = _bench_spec(args)
    os.makedirs(args.out_dir, exist_ok=True)
    table = bench.run_experiment(spec, out_dir=args.out_dir, jobs=args.jobs)
    bench.write_csv(table, os.path.join(args.out_dir, "results.csv"))
    bench.write_metadata(table, os.path.join(args.out_dir, "metadata.txt"))
    if not args.no_figures:
        plots.render_report_figures(
            args.kind,
            table,
            os.path.join(args.out_dir, "figure"),
            trace_dir=args.out_dir,
            sweep=spec.sweep,
            methods=spec.methods,
        )
    print(_bench_summary(args.kind, table))
    failed = sum(
        1 for r in table.rows if r.method != "oracle" and not np.isfinite(r.rel_err)
    )
    discarded = int(table.metadata.get("discarded", "0"))
    return 2 if failed or discarded else 0


# ---------------------------------------------------------------------------
# parser assembly


def _add_family_flags(sub, n_default=256):
    sub.add_argument("--family", choices=FAMILIES, default="gaussian",
                     help="measurement matrix family (default: %(default)s)")
    sub.add_argument("--m", type=int, default=64,
                     help="rows (default: %(default)s)")
    sub.add_argument("--n", type=int, default=n_default,
                     help="columns (default: %(default)s)")
    sub.add_argument("--F", type=int, default=None,
                     help="column coherence factor, odct only (default: none)")
    sub.add_argument("--seed", type=int, default=0,
                     help="master seed (default: %(default)s)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sparseprox",
        description="Sparse recovery with the L1 minus alpha*L2 penalty.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    px = subs.add_parser("prox", help="evaluate the penalty prox at one point")
    px.add_argument("--y", required=True, help="input vector, comma separated")
    px.add_argument("--lambda", dest="lam", type=float, required=True,
                    help="prox threshold, > 0")
    px.add_argument("--alpha", type=float, default=1.0,
                    help="penalty mix weight (default: %(default)s)")
    px.add_argument("--tie", choices=("lowest", "report-all-maxima"), default="lowest",
                    help="tie handling for non-unique maxima (default: %(default)s)")
    px.add_argument("--config", help="key=value defaults file")
    px.set_defaults(func=cmd_prox)

    sv = subs.add_parser("solve", help="run one solver on one instance")
    sv.add_argument("--method", choices=METHODS, default="fbs",
                    help="solver (default: %(default)s)")
    sv.add_argument("--matrix", help="CSV matrix file; omit to generate a family matrix")
    sv.add_argument("--rhs", help="CSV right-hand side, requires --matrix")
    sv.add_argument("--truth", help="CSV ground truth, optional with --matrix")
    _add_family_flags(sv)
    sv.add_argument("--sparsity", type=int, default=10,
                    help="ground-truth support size (default: %(default)s)")
    sv.add_argument("--sigma", type=float, default=0.0,
                    help="noise level (default: %(default)s)")
    sv.add_argument("--gamma", type=float, default=0.01,
                    help="penalty weight (default: %(default)s)")
    sv.add_argument("--alpha", type=float, default=1.0,
                    help="penalty mix weight (default: %(default)s)")
    sv.add_argument("--lambda", dest="lam", type=float, default=None,
                    help="forward-backward stepsize (default: 0.99/L)")
    sv.add_argument("--delta", type=float, default=None,
                    help="splitting weight (default: 10*gamma)")
    sv.add_argument("--tol", type=float, default=1e-8,
                    help="relative step tolerance (default: %(default)s)")
    sv.add_argument("--max-iter-factor", type=int, default=10,
                    help="iteration cap as a multiple of n (default: %(default)s)")
    sv.add_argument("--alpha-schedule", type=_parse_schedule, default=None,
                    help="alpha schedule, kind:key=val,... (default: constant alpha)")
    sv.add_argument("--gamma-schedule", type=_parse_schedule, default=None,
                    help="gamma schedule, kind:key=val,... (default: constant gamma)")
    sv.add_argument("--cold", action="store_true",
                    help="start from zero instead of the L1 warm start")
    sv.add_argument("--out", help="write the solution vector to this CSV file")
    sv.add_argument("--trace", help="write the iteration trace to this CSV file")
    sv.add_argument("--config", help="key=value defaults file")
    sv.set_defaults(func=cmd_solve)

    ct = subs.add_parser("construct", help="plant known stationary points")
    _add_family_flags(ct)
    ct.add_argument("--sparsity", type=int, default=10,
                    help="planted support size (default: %(default)s)")
    ct.add_argument("--gamma", type=float, default=0.01,
                    help="penalty weight (default: %(default)s)")
    ct.add_argument("--alpha", type=float, default=1.0,
                    help="penalty mix weight (default: %(default)s)")
    ct.add_argument("--lambda", dest="lam", type=float, default=1.0,
                    help="stepsize the fixed point is planted at (default: %(default)s)")
    ct.add_argument("--trials", type=int, default=1,
                    help="instances to attempt (default: %(default)s)")
    ct.add_argument("--out-dir", default="construct_out",
                    help="output directory (default: %(default)s)")
    ct.add_argument("--config", help="key=value defaults file")
    ct.set_defaults(func=cmd_construct)

    bn = subs.add_parser("bench", help="run a benchmark campaign")
    bn.add_argument("kind", choices=bench.KINDS, help="campaign type")
    _add_family_flags(bn)
    bn.add_argument("--sparsity", type=int, default=None,
                    help="support size; for success kind a single sweep point")
    bn.add_argument("--sigma", type=float, default=0.1,
                    help="noise level, noisy kind (default: %(default)s)")
    bn.add_argument("--sweep", type=_parse_floats, default=None,
                    help="sweep values, comma separated (default: per kind)")
    bn.add_argument("--trials", type=int, default=100,
                    help="trials per sweep value (default: %(default)s)")
    bn.add_argument("--methods", type=_parse_names, default=None,
                    help="methods to run, comma separated (default: per kind)")
    bn.add_argument("--jobs", type=int, default=1,
                    help="worker processes (default: %(default)s)")
    bn.add_argument("--out-dir", default="bench_out",
                    help="output directory (default: %(default)s)")
    bn.add_argument("--no-figures", action="store_true",
                    help="skip figure rendering")
    bn.add_argument("--config", help="key=value defaults file")
    bn.set_defaults(func=cmd_bench)

    return parser, {"prox": px, "solve": sv, "construct": ct, "bench": bn}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()
    try:
        command, config_path = _peek_config(argv)
        if config_path is not None:
            if command not in subparsers:
                raise ValueError("--config needs a subcommand")
            _apply_config(subparsers[command], _read_config(config_path))
        args = parser.parse_args(argv)
        return args.func(args)
    except (
        ValueError,
        OSError,
        ConvergenceError,
        argparse.ArgumentTypeError,
        np.linalg.LinAlgError,
    ) as e:
        _print_err(str(e))
        return 1


if __name__ == "__main__":
    sys.exit(main())
