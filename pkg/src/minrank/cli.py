"""Command-line front end.

Subcommands: solve (rank search or a heuristic on one matrix),
analyze (tightness report), gen (write a random instance), bench
(Monte-Carlo success rates from a config file).  Output on stdout is
machine-parseable key=value lines; diagnostics go to stderr.  Exit
codes: 0 success, 1 bad input, 2 solver failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import baselines, bench, frisch_kalman as fk, linalg, matio, tightness
from .conic import SolverConfig, SolverFailure

_FMT = "{:.9g}"


def _fmt(x: float) -> str:
    return _FMT.format(x)


def _vec(v: np.ndarray) -> str:
    return ",".join(_fmt(x) for x in v)


def _fail(msg: str, code: int) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _fk_report(result: fk.FkResult) -> str:
    lines = [
        f"variant={result.variant}",
        f"r_star={result.r_star}",
        f"fallback_used={'true' if result.fallback_used else 'false'}",
        f"primal_value={_fmt(result.primal_value)}",
        f"dual_value={_fmt(result.dual_value)}",
        f"gap={_fmt(result.gap)}",
        f"delta={_vec(result.delta_star)}",
    ]
    for att in result.per_rank:
        tag = f"rank_{att.r}"
        lines.append(f"{tag}_status={att.solver_status}")
        if att.verdict is None:
            lines.append(f"{tag}_feasible=unknown")
        else:
            lines.append(f"{tag}_feasible={'true' if att.verdict.feasible else 'false'}")
            lines.append(f"{tag}_min_eig_omega={_fmt(att.verdict.min_eig_omega)}")
            lines.append(f"{tag}_min_eig_diff={_fmt(att.verdict.min_eig_diff)}")
            lines.append(f"{tag}_max_offdiag={_fmt(att.verdict.max_offdiag)}")
        lines.append(f"{tag}_dual_value={_fmt(att.dual_value)}")
    return "\n".join(lines) + "\n"


def _write_report(path: str | None, text: str) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _cmd_solve(args) -> int:
    try:
        sigma = matio.load_matrix(args.input)
    except (OSError, ValueError) as exc:
        return _fail(str(exc), 1)
    cfg = SolverConfig(tol=args.tol, max_iters=args.max_iters)
    try:
        if args.method == "proposed":
            variant = fk.VARIANT_SHAPIRO if args.variant == "shapiro" else fk.VARIANT_FK
            instance = fk.FkInstance(sigma, variant)
            result = fk.solve(instance, r_init=args.r_init, config=fk.FkConfig(sdp=cfg))
            report = _fk_report(result)
            sys.stdout.write(report)
            _write_report(args.report, report)
            return 0
        if args.method == "nuclear":
            res = baselines.nuclear_norm_solve(sigma, cfg)
        elif args.method == "logdet":
            res = baselines.logdet_solve(sigma, config=cfg)
        else:  # rstar: sequential target ranks, first self-consistent read
            res = None
            for r in range(1, sigma.shape[0] + 1):
                res = baselines.rstar_solve(sigma, r, cfg)
                if res.implied_rank <= r:
                    break
    except ValueError as exc:
        return _fail(str(exc), 1)
    except SolverFailure as exc:
        return _fail(str(exc), 2)
    lines = [
        f"method={res.method}",
        f"r_star={res.implied_rank}",
        f"objective={_fmt(res.objective)}",
        f"delta={_vec(res.delta)}",
    ]
    if res.iterations:
        lines.append(f"iterations={res.iterations}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    _write_report(args.report, text)
    return 0


def _cmd_analyze(args) -> int:
    try:
        omega = matio.load_matrix(args.input)
        report = tightness.analyze(omega)
    except (OSError, ValueError) as exc:
        return _fail(str(exc), 1)
    text = tightness.report_to_keyvalues(report)
    sys.stdout.write(text)
    _write_report(args.report, text)
    return 0


def _cmd_gen(args) -> int:
    if not (1 <= args.r < args.n):
        return _fail(f"need 1 <= r < n, got r={args.r}, n={args.n}", 1)
    if args.noise <= 0:
        return _fail("noise must be positive", 1)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    sigma = None
    for _ in range(1000):
        omega = bench.gen_low_rank(args.n, args.r, rng)
        delta = bench.gen_noise(args.n, args.noise, rng)
        cand = omega + np.diag(delta)
        if linalg.is_pd(cand):
            sigma = cand
            break
    if sigma is None:
        return _fail("could not draw a positive definite instance", 2)
    paths = {
        "sigma": f"{args.out}_sigma.txt",
        "omega": f"{args.out}_omega.txt",
        "delta": f"{args.out}_delta.txt",
    }
    try:
        matio.save_matrix(paths["sigma"], sigma)
        matio.save_matrix(paths["omega"], omega)
        matio.save_matrix(paths["delta"], np.diag(delta))
    except OSError as exc:
        return _fail(str(exc), 1)
    for key, path in paths.items():
        print(f"{key}={path}")
    return 0


def _cmd_bench(args) -> int:
    try:
        cfg = bench.parse_config(args.config)
    except (OSError, ValueError) as exc:
        return _fail(str(exc), 1)
    table = bench.run_experiment(cfg)
    try:
        bench.export(table, args.out)
        if args.gnuplot:
            bench.export_gnuplot(table, args.gnuplot)
    except OSError as exc:
        return _fail(str(exc), 1)
    print(f"out={args.out}")
    print(f"rows={len(table.rows)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minrank",
        description="Minimum-rank factor-analytic covariance decomposition",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one instance from a matrix file")
    p.add_argument("--input", required=True, help="matrix file (n, then n rows)")
    p.add_argument("--variant", choices=["fk", "shapiro"], default="fk")
    p.add_argument("--r-init", type=int, default=1, dest="r_init")
    p.add_argument(
        "--method",
        choices=["proposed", "nuclear", "rstar", "logdet"],
        default="proposed",
    )
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=100_000, dest="max_iters")
    p.add_argument("--report", help="also write the report to this path")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("analyze", help="tightness report for a PSD matrix file")
    p.add_argument("--input", required=True)
    p.add_argument("--report", help="also write the report to this path")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("gen", help="generate a random instance")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--noise", type=float, required=True, help="Frobenius norm of the noise")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("bench", help="run a Monte-Carlo experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--gnuplot", help="optional gnuplot data file")
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
