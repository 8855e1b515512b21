"""Command-line front end.

Subcommands
-----------
eval      evaluate identities for one scenario
simulate  Monte Carlo estimates (or one event trace with ``--paths 1 --trace``)
verify    run the verification suite and write its CSV report
sweep     tabulate identities over a grid of one scenario variable

Exit codes: 0 ok, 1 a verification check or numerical self-check failed,
2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .identities import IDENTITIES, IdentityError, Scenario, evaluate
from .levy_model import ModelConfigError, load_model, reference_models
from .simulation import Mode, SimConfig, SimulationError, estimate_many, simulate_path
from .simulation.simulator import THREADS_ENV, TARGETS
from .verification import default_suite, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

SWEEPABLE = ("q", "r", "a", "b", "x", "theta")
_KIND_MODE = {"P": Mode.ParisianOnly, "B": Mode.ParisianPlusBarrier, "K": Mode.KilledAtObservation}


class UsageError(Exception):
    pass


def _fmt(v):
    return "" if v is None else repr(float(v))


def _model(spec):
    refs = reference_models()
    if spec in refs:
        return refs[spec]
    try:
        return load_model(spec)
    except FileNotFoundError:
        raise UsageError(f"--model: {spec!r} is neither a reference model "
                         f"({', '.join(refs)}) nor a readable file") from None


def _trace_value(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else repr(v)


def _scenario(args):
    return Scenario(q=args.q, r=args.r, a=args.a, b=args.b, x=args.x, theta=args.theta)


def _sim_config(args, default_paths):
    return SimConfig(
        n_paths=args.paths if args.paths is not None else default_paths,
        seed=args.seed,
        euler_step=args.step,
        horizon=args.horizon,
        antithetic=args.antithetic,
        workers=args.workers,
    )


def _write(args, text):
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def _pretty(rows):
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    return "".join("  ".join(str(c).rjust(n) for c, n in zip(r, widths)) + "\n" for r in rows)


def _table(args, rows):
    return _csv(rows) if args.format == "csv" else _pretty(rows)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_eval(args):
    model = _model(args.model)
    s = _scenario(args)
    rows = [("identity", "q", "r", "a", "b", "x", "theta", "value")]
    traces = []
    for name in args.identity:
        val = evaluate(name, model, s)
        rows.append((name, _fmt(s.q), _fmt(s.r), _fmt(s.a), _fmt(s.b), _fmt(s.x), _fmt(s.theta),
                     _fmt(val.value)))
        if args.trace:
            traces.append(f"# {name} ({val.source.value})")
            traces.extend(f"#   {k} = {_trace_value(v)}" for k, v in val.kernel_trace.items())
    _write(args, _table(args, rows))
    if traces:
        # keep the CSV clean; the trace goes to stderr
        print("\n".join(traces), file=sys.stderr if args.format == "csv" else sys.stdout)
    return EXIT_OK


def _target_scenario(target, s):
    _, use_a, use_b, _ = TARGETS[target]
    return replace(s, a=s.a if use_a else None, b=s.b if use_b else None)


def cmd_simulate(args):
    model = _model(args.model)
    s = _scenario(args)
    for t in args.target:
        if t not in TARGETS:
            raise UsageError(f"unknown target {t!r}; choose from {', '.join(TARGETS)}")
    cfg = _sim_config(args, 100_000)
    if args.trace:
        if cfg.n_paths != 1 or len(args.target) != 1:
            raise UsageError("--trace needs --paths 1 and a single target")
        t = args.target[0]
        kind = TARGETS[t][0]
        out = simulate_path(model, _target_scenario(t, s), _KIND_MODE[kind], cfg, args.path_index,
                            trace=True)
        _write(args, "".join(line + "\n" for line in out.trace_lines()))
        return EXIT_OK
    sc = {t: _target_scenario(t, s) for t in args.target}
    rows = [("target", "q", "r", "a", "b", "x", "theta", "mean", "std_error", "n", "bias_note")]
    for t in args.target:
        est = estimate_many([t], model, sc[t], cfg)[t]
        z = sc[t]
        rows.append((t, _fmt(z.q), _fmt(z.r), _fmt(z.a), _fmt(z.b), _fmt(z.x), _fmt(z.theta),
                     _fmt(est.mean), _fmt(est.std_error), str(est.n), est.bias_note))
    _write(args, _table(args, rows))
    return EXIT_OK


def cmd_verify(args):
    specs = default_suite(ubv=args.suite == "default")
    if args.suite == "analytic":
        specs = [sp for sp in specs if sp.kind.value != "MCAgreement"]
    cfg = _sim_config(args, 20_000)
    report = run_suite(specs, cfg, workers=args.workers or 1)
    _write(args, report.to_csv() if args.format == "csv" else report.to_pretty() + "\n")
    if report.failures:
        names = ", ".join(r.name for r in report.failures)
        print(f"{len(report.failures)} check(s) failed: {names}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def sweep_grid(lo, hi, steps):
    if steps < 1:
        raise UsageError(f"--steps must be >= 1, got {steps}")
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise UsageError("sweep bounds must be finite")
    if steps == 1:
        if lo != hi:
            raise UsageError("a single step needs --from equal to --to")
        return np.array([lo])
    if lo == hi:
        raise UsageError("degenerate grid: --from equals --to with more than one step")
    return np.linspace(lo, hi, steps)


def cmd_sweep(args):
    model = _model(args.model)
    grid = sweep_grid(args.start, args.stop, args.steps)
    base = _scenario(args)
    rows = [(args.var, *args.identity)]
    for v in grid:
        s = replace(base, **{args.var: float(v)})
        rows.append((_fmt(v), *(_fmt(evaluate(n, model, s).value) for n in args.identity)))
    _write(args, _table(args, rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_model(p):
    p.add_argument("--model", default="cramer_lundberg",
                   help="reference model name or JSON model file (default: %(default)s)")


def _add_scenario(p):
    g = p.add_argument_group("scenario")
    g.add_argument("--q", type=float, default=0.05, help="discount rate (default: %(default)s)")
    g.add_argument("--r", type=float, default=1.0, help="observation rate (default: %(default)s)")
    g.add_argument("--a", type=float, default=None, help="absolute-ruin level, < 0")
    g.add_argument("--b", type=float, default=None, help="upper level / dividend barrier, > 0")
    g.add_argument("--x", type=float, default=0.0, help="starting point (default: %(default)s)")
    g.add_argument("--theta", type=float, default=0.0, help="transform variable of the injections")


def _add_output(p):
    p.add_argument("--format", choices=("csv", "pretty"), default="csv")
    p.add_argument("--output", "-o", default=None, help="output file (default: stdout)")


def _add_sim(p):
    g = p.add_argument_group("simulation")
    g.add_argument("--paths", type=int, default=None, help="number of paths")
    g.add_argument("--seed", type=int, default=7, help="seed (default: %(default)s)")
    g.add_argument("--step", type=float, default=None,
                   help="finest time step of the Brownian part (required when sigma > 0)")
    g.add_argument("--horizon", type=float, default=None, help="time cap (default: 20 / q)")
    g.add_argument("--antithetic", action="store_true", help="antithetic path pairs")
    g.add_argument("--workers", type=int, default=None,
                   help=f"worker threads (default: ${THREADS_ENV} or the CPU count)")


def build_parser():
    ap = argparse.ArgumentParser(prog="parisian-levy", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="evaluate identities")
    p.add_argument("identity", nargs="+", choices=sorted(IDENTITIES), metavar="IDENTITY",
                   help=f"one of: {', '.join(IDENTITIES)}")
    _add_model(p)
    _add_scenario(p)
    _add_output(p)
    p.add_argument("--trace", action="store_true", help="print the intermediate kernels")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="Monte Carlo estimates")
    p.add_argument("target", nargs="+", metavar="TARGET", help=f"one of: {', '.join(TARGETS)}")
    _add_model(p)
    _add_scenario(p)
    _add_sim(p)
    _add_output(p)
    p.add_argument("--trace", action="store_true", help="write the event trace of one path")
    p.add_argument("--path-index", type=int, default=0, help="path traced with --trace")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the verification suite")
    p.add_argument("--suite", choices=("default", "bv", "analytic"), default="default",
                   help="default: everything; bv: skip jump-diffusion Monte Carlo; "
                        "analytic: no Monte Carlo")
    _add_sim(p)
    _add_output(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="tabulate identities over a grid")
    p.add_argument("identity", nargs="+", choices=sorted(IDENTITIES), metavar="IDENTITY")
    p.add_argument("--var", choices=SWEEPABLE, required=True, help="swept variable")
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    _add_model(p)
    _add_scenario(p)
    _add_output(p)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, IdentityError, SimulationError, ModelConfigError, ValueError) as exc:
        print(f"parisian-levy {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        # a numerical self-check failed: the value cannot be trusted
        print(f"parisian-levy {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
