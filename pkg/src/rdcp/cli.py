"""Command-line front end: critical-time, asymptotics, simulate, verify,
lambda-table.

Every output embeds a run manifest (command, resolved config, version,
seeds, wall clock) so reruns are reproducible; floats are written with 17
significant digits. Exit codes: 0 success, 1 usage, 2 degenerate input
(pure 2-regular law), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

from . import __version__
from .distributions import (
    asymptotic_tc_disc,
    asymptotic_tc_hat,
    direction_from_shorthand,
    from_epsilon_direction,
    from_json,
    from_shorthand,
    heuristic_percolation_threshold,
    molloy_reed_constant,
)
from .errors import (
    BracketFailure,
    DegenerateRegular,
    NoConvergence,
    RdcpError,
    ToleranceUnachievable,
    UsageError,
)
from .lambda_solver import HazardModel
from .perturbation import run_verification
from .rdcp_sim import SimConfig, replicate_traces
from .spectral import critical_time_hat

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DEGENERATE = 2
EXIT_NUMERICAL = 3

_NUMERICAL_ERRORS = (BracketFailure, ToleranceUnachievable, NoConvergence)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage failures exit 1, not argparse's 2
        raise UsageError(message)


def _fmt(x) -> str:
    return f"{x:.17g}"


def _manifest(command: str, config: dict, seeds=(), wall: float = 0.0, outputs=()) -> dict:
    return {
        "command": command,
        "config": config,
        "version": __version__,
        "seeds": list(seeds),
        "wall_clock_s": wall,
        "outputs": list(outputs),
    }


def _write_json(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=False)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _write_csv(header, rows, manifest: dict, out: str | None) -> None:
    lines = ["# manifest: " + json.dumps(manifest)]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_dist(args):
    if args.dist is None:
        raise UsageError("--dist is required")
    text = args.dist.strip()
    if text.startswith("{"):
        return from_json(text)
    return from_shorthand(text)


def _parse_eps_list(text: str):
    try:
        eps = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"malformed --eps list {text!r}") from exc
    if not eps:
        raise UsageError("--eps list is empty")
    if any(not 0.0 < e < 1.0 for e in eps):
        raise UsageError("--eps entries must lie in (0, 1)")
    return eps


def cmd_critical_time(args) -> int:
    dist = _parse_dist(args)
    t0 = time.time()
    if dist.is_two_regular:
        sys.stderr.write(
            "degenerate 2-regular law: t_c = 1 exactly, t_hat_c = infinity "
            "(no spectral solve performed)\n"
        )
        return EXIT_DEGENERATE
    result = critical_time_hat(dist, tol=args.tol, n_nodes=args.nodes)
    heur = heuristic_percolation_threshold(dist)
    payload = {
        "manifest": _manifest(
            "critical-time",
            {"dist": dist.to_json(), "tol": args.tol, "nodes": args.nodes},
            wall=time.time() - t0,
            outputs=[args.out] if args.out else [],
        ),
        **result.to_dict(),
        "asymptotic_tc_hat": asymptotic_tc_hat(dist),
        "asymptotic_tc_disc": asymptotic_tc_disc(dist),
        "heuristic_percolation_threshold": heur,
    }
    _write_json(payload, args.out)
    return EXIT_OK


def cmd_asymptotics(args) -> int:
    if args.eps is None:
        raise UsageError("--eps is required")
    eps_list = _parse_eps_list(args.eps)
    direction = direction_from_shorthand(args.direction)
    ups = molloy_reed_constant(direction)
    disc_sum = sum(
        (k * k - 3 * k + 2) * direction.r_at(k) for k in range(3, direction.delta + 1)
    )
    t0 = time.time()
    rows = []
    for eps in eps_list:
        dist = from_epsilon_direction(direction.with_epsilon(eps))
        try:
            res = critical_time_hat(dist, tol=args.tol, n_nodes=args.nodes)
            rows.append(
                [
                    eps,
                    res.t_hat_c,
                    res.t_c,
                    res.t_hat_c * eps * ups,
                    (1.0 - res.t_c) / (eps * disc_sum),
                    "ok",
                ]
            )
        except _NUMERICAL_ERRORS as exc:
            rows.append([eps, math.nan, math.nan, math.nan, math.nan, f"failed:{type(exc).__name__}"])
    manifest = _manifest(
        "asymptotics",
        {"direction": args.direction, "eps": eps_list, "tol": args.tol, "nodes": args.nodes},
        wall=time.time() - t0,
        outputs=[args.out] if args.out else [],
    )
    header = ["eps", "t_hat_c", "t_c", "cont_product", "disc_ratio", "status"]
    if args.format == "json":
        payload = {
            "manifest": manifest,
            "rows": [dict(zip(header, row)) for row in rows],
        }
        _write_json(payload, args.out)
    else:
        _write_csv(header, rows, manifest, args.out)
    if any(str(r[-1]).startswith("failed") for r in rows):
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
        dist = from_json(raw["dist"]) if isinstance(raw["dist"], dict) else from_shorthand(raw["dist"])
        cfg = SimConfig(
            n=int(raw["n"]),
            dist=dist,
            seed=int(raw.get("seed", args.seed)),
            checkpoints=tuple(raw.get("checkpoints", ())),
            mode=raw.get("mode", "discrete"),
            debug_checks=bool(raw.get("debug_checks", False)),
        )
        reps = int(raw.get("reps", args.reps))
    else:
        dist = _parse_dist(args)
        checkpoints = ()
        if args.checkpoints:
            checkpoints = tuple(float(x) for x in args.checkpoints.split(",") if x.strip())
        cfg = SimConfig(
            n=args.n, dist=dist, seed=args.seed, checkpoints=checkpoints, mode=args.mode
        )
        reps = args.reps
    t0 = time.time()
    traces = replicate_traces(cfg, reps)
    wall = time.time() - t0
    manifest = _manifest(
        "simulate",
        {
            "dist": cfg.dist.to_json(),
            "n": cfg.n,
            "reps": reps,
            "mode": cfg.mode,
            "checkpoints": list(cfg.checkpoints),
        },
        seeds=[cfg.seed],
        wall=wall,
        outputs=[args.out] if args.out else [],
    )
    if args.format == "json":
        payload = {
            "manifest": manifest,
            "traces": [tr.to_dict(rep) for rep, tr in enumerate(traces)],
        }
        _write_json(payload, args.out)
    else:
        header = ["rep", "checkpoint", "edges", "largest", "second", "deg_hist_json"]
        rows = []
        for rep, tr in enumerate(traces):
            for row in tr.to_rows(rep):
                rows.append(
                    [
                        row["rep"],
                        float(row["checkpoint"]),
                        row["edges"],
                        row["largest"],
                        row["second"],
                        '"' + row["deg_hist_json"].replace('"', '""') + '"',
                    ]
                )
        _write_csv(header, rows, manifest, args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    direction = direction_from_shorthand(args.direction, epsilon=args.eps)
    t0 = time.time()
    report = run_verification(direction, args.delta, k_bar=args.kbar)
    wall = time.time() - t0
    payload = {
        "manifest": _manifest(
            "verify",
            {
                "direction": args.direction,
                "eps": args.eps,
                "delta": args.delta,
                "k_bar": args.kbar,
            },
            wall=wall,
            outputs=[args.out] if args.out else [],
        ),
        **report.to_dict(),
    }
    _write_json(payload, args.out)
    strict = args.strict or (
        abs(args.eps - 0.01) < 1e-12 and abs(args.delta - 0.5) < 1e-12
    )
    if strict and not report.all_passed:
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_lambda_table(args) -> int:
    dist = _parse_dist(args)
    t0 = time.time()
    hazard = HazardModel.build(dist, args.t_max, tol=args.tol)
    import numpy as np

    t = np.concatenate([[0.0], np.geomspace(args.t_max * 1e-6, hazard.t_max, args.points - 1)])
    rows = list(
        zip(
            t.tolist(),
            hazard.table.lambda_at(t).tolist(),
            hazard.table.lambda_prime_at(t).tolist(),
            hazard.hazard_density(t).tolist(),
            hazard.survival(t).tolist(),
        )
    )
    manifest = _manifest(
        "lambda-table",
        {"dist": dist.to_json(), "t_max": args.t_max, "tol": args.tol, "points": args.points},
        wall=time.time() - t0,
        outputs=[args.out] if args.out else [],
    )
    _write_csv(["t", "lambda", "lambda_prime", "H", "I"], rows, manifest, args.out)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="rdcp", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=None, help="output path (default: stdout)")
        p.add_argument("--format", choices=("json", "csv"), default=None)

    p = sub.add_parser("critical-time", help="spectral critical time of one law")
    p.add_argument("--dist", help="shorthand 2:0.99,3:0.01 or JSON")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--nodes", type=int, default=400)
    common(p)
    p.set_defaults(func=cmd_critical_time, format="json")

    p = sub.add_parser("asymptotics", help="critical-time sweep over eps")
    p.add_argument("--direction", default="3:1.0", help="hub shorthand, e.g. 3:1.0")
    p.add_argument("--eps", help="comma list, e.g. 0.1,0.05,0.02,0.01")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--nodes", type=int, default=400)
    common(p)
    p.set_defaults(func=cmd_asymptotics, format="csv")

    p = sub.add_parser("simulate", help="Monte Carlo process runs")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--dist")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("discrete", "continuous"), default="discrete")
    p.add_argument("--checkpoints", default=None, help="comma list of s or t values")
    common(p)
    p.set_defaults(func=cmd_simulate, format="csv")

    p = sub.add_parser("verify", help="perturbation inequality suite")
    p.add_argument("--direction", default="3:1.0")
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--kbar", type=float, default=2.0)
    p.add_argument("--strict", action="store_true", help="nonzero exit on any violation")
    common(p)
    p.set_defaults(func=cmd_verify, format="json")

    p = sub.add_parser("lambda-table", help="export t,lambda,lambda',H,I")
    p.add_argument("--dist")
    p.add_argument("--t-max", type=float, default=100.0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--points", type=int, default=512)
    common(p)
    p.set_defaults(func=cmd_lambda_table, format="csv")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except DegenerateRegular as exc:
        sys.stderr.write(f"degenerate input: {exc}\n")
        return EXIT_DEGENERATE
    except _NUMERICAL_ERRORS as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except RdcpError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
