"""Command-line front end.

Subcommands print JSON (single results) or CSV (sweeps) to stdout, or to
``--out``. Every payload embeds a run manifest; in CSV it is the first line,
written as ``# manifest: {...}``. Exit codes: 0 success, 2 usage error,
3 domain error, 4 optimizer did not bracket an interior minimum.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import Method, StrategyConfig, SystemParams, analyze, binomial_sigma, verification_v_bound
from .errors import DomainError, TraceFormatError
from .optimize import SWEEP_COLUMNS, SWEEPABLE, crossover_sigma, optimize_buffer, sweep
from .simulate import BlockModel, forced_failure_trials, run_campaign

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_NOT_CONVERGED = 4

METHOD_CHOICES = [m.value for m in Method]


class UsageError(Exception):
    pass


def _real(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"not finite: {text!r}")
    return value


def _count(text: str) -> int:
    value = _real(text)
    if not value.is_integer():
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    return int(value)


def _add_system(p: argparse.ArgumentParser, sigma_help: str = "block error rate spread") -> None:
    p.add_argument("--n", type=_count, required=True, help="block size in bits (1e6 accepted)")
    p.add_argument("--delta", type=_real, required=True, help="mean error rate")
    p.add_argument("--epsilon", type=_real, required=True, help="security parameter")
    p.add_argument("--sigma", type=_real, default=None, help=sigma_help + " (default sqrt(delta(1-delta)/n))")


def _add_output(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, default=None, help="write the result here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qkdrecon",
        description="Reconciliation overhead for QKD: sampling-based estimation vs verification.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="loss report for an explicit configuration")
    p.add_argument("--method", choices=METHOD_CHOICES, required=True)
    _add_system(p)
    p.add_argument("--buffer", type=_real, required=True)
    p.add_argument("--sample-size", type=_count, default=None)
    p.add_argument("--verify-bits", type=_count, default=None)
    p.add_argument(
        "--expectation",
        action="store_true",
        help="average verification charges over the previous-block rate distribution",
    )
    _add_output(p)

    p = sub.add_parser("optimize", help="optimal buffer (and sample size for combo)")
    p.add_argument("--method", choices=METHOD_CHOICES, required=True)
    _add_system(p)
    _add_output(p)

    p = sub.add_parser("sweep", help="optimize every method over a grid of one parameter")
    p.add_argument("--vary", choices=SWEEPABLE, required=True)
    p.add_argument("--from", dest="start", type=_real, required=True)
    p.add_argument("--to", dest="stop", type=_real, required=True)
    p.add_argument("--steps", type=_count, required=True)
    p.add_argument("--method", choices=METHOD_CHOICES, action="append", default=None, help="repeatable; default all")
    p.add_argument("--n", type=_count, default=None)
    p.add_argument("--delta", type=_real, default=None)
    p.add_argument("--epsilon", type=_real, default=None)
    p.add_argument("--sigma", type=_real, default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--workers", type=_count, default=1)
    p.add_argument("--plot", type=Path, default=None, help="also render the sweep to this image file")
    _add_output(p)

    p = sub.add_parser("simulate", help="seeded Monte Carlo campaign")
    p.add_argument("--method", choices=METHOD_CHOICES, required=True)
    _add_system(p, sigma_help="extra block-rate spread on top of binomial noise; 0 or unset")
    p.add_argument("--buffer", type=_real, default=None, help="default: analytic optimum")
    p.add_argument("--sample-size", type=_count, default=None)
    p.add_argument("--verify-bits", type=_count, default=None)
    p.add_argument("--blocks", type=_count, default=10_000)
    p.add_argument(
        "--trials",
        type=_count,
        default=None,
        help="instead of a campaign, run this many forced-failure verification trials",
    )
    p.add_argument("--seed", type=_count, default=None, help="default: $QKDRECON_SEED or 0")
    p.add_argument("--workers", type=_count, default=1)
    _add_output(p)

    p = sub.add_parser("trace", help="statistics, replay and recommendation for a recorded trace")
    p.add_argument("--file", type=Path, required=True)
    p.add_argument("--n", type=_count, required=True)
    p.add_argument("--epsilon", type=_real, required=True)
    p.add_argument("--delta", type=_real, default=None, help="default: trace mean")
    p.add_argument("--sigma", type=_real, default=None)
    p.add_argument("--method", choices=METHOD_CHOICES, default=None, help="also replay this configuration")
    p.add_argument("--buffer", type=_real, default=None)
    p.add_argument("--sample-size", type=_count, default=None)
    p.add_argument("--verify-bits", type=_count, default=None)
    p.add_argument("--plot", type=Path, default=None, help="render the trace to this image file")
    _add_output(p)

    p = sub.add_parser("report", help="regenerate the loss-comparison tables and figures into a directory")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--epsilon", type=_real, default=1e-6)
    p.add_argument("--n", type=_count, default=1_000_000)
    p.add_argument("--workers", type=_count, default=1)
    p.add_argument("--seed", type=_count, default=None)
    return parser


def _manifest(args: argparse.Namespace, seed: int | None = None) -> dict:
    params = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if k not in ("command", "out")
    }
    return {
        "subcommand": args.command,
        "params": params,
        "version": __version__,
        "seed": seed,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, Method):
        return obj.value
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8")


def _emit_json(args, payload: dict, seed: int | None = None) -> None:
    doc = {"manifest": _manifest(args, seed), **payload}
    _emit(json.dumps(doc, indent=2, default=_json_default) + "\n", args.out)


def _params(args) -> SystemParams:
    return SystemParams(args.n, args.delta, args.epsilon, args.sigma)


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("QKDRECON_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"QKDRECON_SEED={env!r} is not an integer") from None


def _config(args, method: str) -> StrategyConfig:
    return StrategyConfig(Method.parse(method), args.buffer, args.sample_size, args.verify_bits)


def cmd_analyze(args) -> int:
    report = analyze(_params(args), _config(args, args.method), expectation=args.expectation)
    _emit_json(args, {"report": report.to_dict()})
    return EXIT_OK


def cmd_optimize(args) -> int:
    res = optimize_buffer(_params(args), args.method)
    _emit_json(args, {"result": res.to_dict()})
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def sweep_grid(vary: str, start: float, stop: float, steps: int) -> list[float]:
    if steps < 1:
        raise UsageError("--steps must be >= 1")
    if start > stop:
        raise UsageError(f"--from {start} is greater than --to {stop}")
    if steps == 1:
        return [start]
    if vary in ("n", "epsilon"):
        if start <= 0:
            raise UsageError(f"--from must be positive when varying {vary}")
        grid = np.geomspace(start, stop, steps)
    else:
        grid = np.linspace(start, stop, steps)
    if vary == "n":
        return [float(round(x)) for x in grid]
    return [float(x) for x in grid]


def rows_to_csv(rows, manifest: dict | None = None) -> str:
    buf = io.StringIO()
    if manifest is not None:
        buf.write("# manifest: " + json.dumps(manifest, default=_json_default) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow(["" if v is None else v for v in r.as_tuple()])
    return buf.getvalue()


def _sweep_template(args) -> SystemParams:
    defaults = {"n": 1_000_000, "delta": 0.05, "epsilon": 1e-6}
    values = {k: getattr(args, k) if getattr(args, k) is not None else defaults[k] for k in defaults}
    sigma = args.sigma
    if args.vary == "sigma":
        sigma = 0.0
    first = args.start
    if args.vary != "sigma":
        values[args.vary] = first if args.vary != "n" else int(round(first))
    return SystemParams(values["n"], values["delta"], values["epsilon"], sigma)


def cmd_sweep(args) -> int:
    grid = sweep_grid(args.vary, args.start, args.stop, args.steps)
    methods = args.method or METHOD_CHOICES
    rows = sweep(_sweep_template(args), args.vary, grid, methods, workers=args.workers)
    if args.plot is not None:
        from .plotting import plot_sweep

        plot_sweep(rows, args.plot)
    manifest = _manifest(args)
    if args.format == "csv":
        _emit(rows_to_csv(rows, manifest), args.out)
    else:
        payload = [dict(zip(SWEEP_COLUMNS, r.as_tuple())) for r in rows]
        _emit(json.dumps({"manifest": manifest, "rows": payload}, indent=2, default=_json_default) + "\n", args.out)
    if any(r.error for r in rows):
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_simulate(args) -> int:
    # --sigma is extra spread on top of the binomial noise every block has
    binom = binomial_sigma(args.n, args.delta) if 0 <= args.delta < 0.5 else 0.0
    params = SystemParams(args.n, args.delta, args.epsilon, math.hypot(args.sigma or 0.0, binom))
    seed = _seed(args)
    method = Method.parse(args.method)
    if args.trials is not None:
        if not method.is_verification:
            raise UsageError("--trials applies to verify-mindist or verify-parity")
        buffer = args.buffer if args.buffer is not None else 0.0
        design = params.delta + buffer
        v = args.verify_bits
        if v is None:
            v = verification_v_bound(method, params.epsilon, design)
        res = forced_failure_trials(method, params.n, design, v, args.trials, seed)
        _emit_json(args, {"forced_failure": res.to_dict()}, seed)
        return EXIT_OK
    buffer, sample = args.buffer, args.sample_size
    if buffer is None:
        best = optimize_buffer(params, method).best_config
        buffer = best.buffer
        if sample is None and method is Method.COMBINATION:
            sample = best.sample_size
    if method is Method.COMBINATION and sample is None:
        raise UsageError("--sample-size is required for combo when --buffer is given")
    # verification sizes V per block from its own design rate unless pinned
    config = StrategyConfig(method, buffer, sample, args.verify_bits)
    spread = args.sigma or 0.0
    model = BlockModel.for_params(params, seed=seed, process="normal" if spread else "binomial", sigma=spread)
    outcome = run_campaign(config, params, model, args.blocks, workers=args.workers)
    analytic = analyze(params, config)
    _emit_json(
        args,
        {"config": config.to_dict(), "outcome": outcome.to_dict(), "analytic": analytic.to_dict()},
        seed,
    )
    return EXIT_OK


def cmd_trace(args) -> int:
    from .trace import read_trace, recommend, replay, trace_stats, MIN_RECOMMEND_BLOCKS

    tr = read_trace(args.file, n=args.n)
    st = trace_stats(tr)
    params = SystemParams(args.n, args.delta if args.delta is not None else st.mean, args.epsilon, args.sigma)
    payload: dict = {"source": tr.source, "stats": st.to_dict()}
    if args.method is not None:
        if args.buffer is None:
            raise UsageError("--buffer is required with --method for trace replay")
        payload["replay"] = [r.to_dict() for r in replay(tr, params, [_config(args, args.method)])]
    plot_buffer = args.buffer
    if len(tr) >= MIN_RECOMMEND_BLOCKS:
        rec = recommend(tr, params)
        payload["recommendation"] = rec.to_dict()
        if plot_buffer is None and rec.method.is_verification:
            plot_buffer = rec.config.buffer
    else:
        payload["recommendation"] = None
        payload["note"] = f"recommendation needs at least {MIN_RECOMMEND_BLOCKS} blocks"
    if args.plot is not None:
        from .plotting import plot_trace

        plot_trace(tr.rates, args.plot, plot_buffer, title=tr.source or None)
    _emit_json(args, payload)
    return EXIT_OK


def cmd_report(args) -> int:
    from .optimize import optimize_combination
    from .plotting import plot_crossover, plot_sweep, plot_trace
    from .trace import recommend, synthetic_trace, write_trace

    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(args, _seed(args))
    n, eps = args.n, args.epsilon
    written = []

    def save(rows, stem, columns=("excess",), methods=None):
        (out / f"{stem}.csv").write_text(rows_to_csv(rows, manifest), encoding="utf-8")
        written.append(f"{stem}.csv")
        for col in columns:
            name = f"{stem}.png" if len(columns) == 1 else f"{stem}_{col}.png"
            plot_sweep(rows, out / name, column=col)
            written.append(name)

    base = [Method.EERS, Method.VERIFY_MINDIST, Method.VERIFY_PARITY]
    deltas = [round(x, 4) for x in np.linspace(0.005, 0.1, 20)]
    rows = sweep(SystemParams(n, 0.05, eps), "delta", deltas, base, workers=args.workers)
    save(rows, "loss_vs_delta", columns=("excess", "buffer", "disclosed_fraction"))
    ns = [float(round(x)) for x in np.geomspace(1e4, 1e8, 17)]
    save(sweep(SystemParams(n, 0.05, eps), "n", ns, base, workers=args.workers), "loss_vs_n")
    epss = [float(x) for x in np.geomspace(1e-15, 1e-2, 14)]
    save(sweep(SystemParams(n, 0.05, eps), "epsilon", epss, base, workers=args.workers), "loss_vs_epsilon")
    sigmas = [float(x) for x in np.linspace(1e-4, 6e-3, 24)]
    save(
        sweep(SystemParams(n, 0.05, eps, 0.0), "sigma", sigmas, list(Method), workers=args.workers),
        "loss_vs_sigma",
    )

    points = []
    for nn in np.geomspace(1e4, 1e8, 9):
        try:
            points.append((float(nn), crossover_sigma(SystemParams(int(nn), 0.05, eps), against=Method.EERS)))
        except DomainError:
            pass
    with open(out / "crossover_sigma_vs_n.csv", "w", encoding="utf-8") as fh:
        fh.write("# manifest: " + json.dumps(manifest, default=_json_default) + "\n")
        fh.write("n,sigma\n" + "".join(f"{a},{b!r}\n" for a, b in points))
    plot_crossover(points, out / "crossover_sigma_vs_n.png")
    written += ["crossover_sigma_vs_n.csv", "crossover_sigma_vs_n.png"]

    table = []
    for delta in (0.05, 0.01):
        p = SystemParams(n, delta, eps)
        for res in (optimize_buffer(p, Method.EERS), optimize_combination(p)):
            r = res.best_report
            table.append(
                {
                    "delta": delta,
                    "method": r.method.value,
                    "buffer": res.best_config.buffer,
                    "disclosed_fraction": r.disclosed_fraction,
                    "excess": r.excess,
                    "sample_size": r.sample_size,
                    "verify_bits": r.verify_bits,
                }
            )
    (out / "eers_vs_combination.json").write_text(
        json.dumps({"manifest": manifest, "rows": table}, indent=2) + "\n", encoding="utf-8"
    )
    written.append("eers_vs_combination.json")

    tr = synthetic_trace(seed=manifest["seed"])
    write_trace(tr, out / "synthetic_trace.csv")
    rec = recommend(tr, SystemParams(tr.n, 0.016, eps))
    plot_trace(tr.rates, out / "synthetic_trace.png", rec.config.buffer if rec.method.is_verification else None)
    (out / "synthetic_trace_recommendation.json").write_text(
        json.dumps({"manifest": manifest, "recommendation": rec.to_dict()}, indent=2, default=_json_default) + "\n",
        encoding="utf-8",
    )
    written += ["synthetic_trace.csv", "synthetic_trace.png", "synthetic_trace_recommendation.json"]
    sys.stdout.write(json.dumps({"manifest": manifest, "files": written}, indent=2) + "\n")
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "trace": cmd_trace,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"qkdrecon {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, TraceFormatError) as exc:
        print(f"qkdrecon {args.command}: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"qkdrecon {args.command}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
