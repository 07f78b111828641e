"""Command-line interface.

Subcommands: gen-policy, gen-log, run, shift, compare. Failures exit
nonzero after printing a machine-readable error JSON to stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import data, harness
from .learners import BanditConfig
from .model import load_policy, save_policy
from .planning import load_hierarchy
from .warmstart import load_warmstart_spec


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(json.dumps({"error": "usage", "message": message}))
        raise SystemExit(2)


def _add_algo_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--algo", required=True,
                   choices=["epsilon", "first", "bag", "cover", "supervised"])
    p.add_argument("--epsilon", type=float, default=None, help="epsilon-greedy exploration rate")
    p.add_argument("--first", type=int, default=None, help="explore-first trial count")
    p.add_argument("--bags", type=int, default=None, help="bagging ensemble size")
    p.add_argument("--cover", type=int, default=None, help="online cover size")
    p.add_argument("--psi", type=float, default=None, help="online cover diversity weight")
    p.add_argument("--feedback-rate", type=float, default=1.0)
    p.add_argument("--delay", type=int, default=0)


def _algo_config(args: argparse.Namespace) -> BanditConfig:
    spec = {"algo": args.algo, "seed": args.seed}
    for key, attr in (("epsilon", "epsilon"), ("first", "first"),
                      ("bags", "bags"), ("cover", "cover"), ("psi", "psi")):
        value = getattr(args, attr)
        if value is not None:
            spec[key] = value
    return harness.bandit_config_from_dict(spec, seed=args.seed)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="abacbandit",
                     description="Adaptive ABAC policy learning via contextual bandits")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-policy", parents=[], help="write a ground-truth policy JSON")
    g.add_argument("--manual", choices=["m1", "m2", "m3"])
    g.add_argument("--random", action="store_true")
    g.add_argument("--rules", type=int)
    g.add_argument("--attrs", type=int)
    g.add_argument("--values", type=int)
    g.add_argument("--target-log", type=int)
    g.add_argument("--permit-prob", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    gl = sub.add_parser("gen-log", help="enumerate a policy's complete log (optionally sampled)")
    gl.add_argument("--policy", required=True)
    gl.add_argument("--fraction", type=float, default=None)
    gl.add_argument("--no-shuffle", action="store_true")
    gl.add_argument("--seed", type=int, required=True)
    gl.add_argument("--out", required=True)

    r = sub.add_parser("run", help="stream a log through one learner")
    r.add_argument("--log", required=True)
    _add_algo_flags(r)
    r.add_argument("--warmstart", default=None, help="warm-start spec JSON")
    r.add_argument("--hierarchy", default=None, help="value hierarchy JSON")
    r.add_argument("--plan", action="store_true")
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--out", required=True)

    s = sub.add_parser("shift", help="stream log A then log B through one learner")
    s.add_argument("--log-a", required=True)
    s.add_argument("--log-b", required=True)
    _add_algo_flags(s)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)

    c = sub.add_parser("compare", help="run a dataset x algorithm comparison matrix")
    c.add_argument("--matrix", required=True)
    c.add_argument("--out", required=True)
    return parser


def _cmd_gen_policy(args) -> int:
    if args.manual and args.random:
        raise ValueError("choose either --manual or --random, not both")
    if args.manual:
        policy = data.manual_policy(args.manual)
    elif args.random:
        missing = [f for f in ("rules", "attrs", "values", "target_log")
                   if getattr(args, f) is None]
        if missing:
            raise ValueError(f"--random needs --rules --attrs --values --target-log (missing {missing})")
        policy = data.gen_random_policy(data.RandomPolicyConfig(
            num_rules=args.rules, num_attributes=args.attrs,
            total_values=args.values, target_log_size=args.target_log,
            permit_probability=args.permit_prob, seed=args.seed))
    else:
        raise ValueError("one of --manual or --random is required")
    save_policy(policy, args.out)
    print(json.dumps({"out": args.out, "rules": len(policy.rules),
                      "enumeration": policy.schema.state_count()}))
    return 0


def _cmd_gen_log(args) -> int:
    policy = load_policy(args.policy)
    log = data.gen_complete_log(policy)
    if args.fraction is not None:
        log = data.sample_partial_log(log, args.fraction, args.seed)
    if not args.no_shuffle:
        log = data.shuffle_log(log, args.seed)
    data.save_log(log, policy.schema, args.out)
    print(json.dumps({"out": args.out, "rounds": len(log)}))
    return 0


def _cmd_run(args) -> int:
    log, schema = data.load_log(args.log)
    algo = _algo_config(args)
    warm = None
    if args.warmstart:
        warm = load_warmstart_spec(args.warmstart, schema, seed=args.seed)
    hierarchy = load_hierarchy(args.hierarchy) if args.hierarchy else None
    if args.plan and hierarchy is None:
        raise ValueError("--plan requires --hierarchy")
    cfg = harness.ExperimentConfig(
        schema=schema, log=log, algo=algo, seed=args.seed,
        warmstart=warm, hierarchy=hierarchy, plan=args.plan,
        feedback_rate=args.feedback_rate, delay=args.delay,
        name=Path(args.log).stem,
    )
    result = harness.run_stream(cfg)
    harness.emit_outputs(result, args.out)
    print(json.dumps({"final_pvl": result.final_pvl, "rounds": result.rounds,
                      "seconds": result.seconds, "out": args.out}))
    return 0


def _cmd_shift(args) -> int:
    log_a, schema_a = data.load_log(args.log_a)
    log_b, schema_b = data.load_log(args.log_b)
    result = harness.run_shift(schema_a, log_a, schema_b, log_b,
                               _algo_config(args), args.seed,
                               feedback_rate=args.feedback_rate, delay=args.delay)
    harness.emit_outputs(result, args.out)
    print(json.dumps({"final_pvl": result.final_pvl, "rounds": result.rounds,
                      "shift_round": result.shift_round, "out": args.out}))
    return 0


def _cmd_compare(args) -> int:
    matrix = json.loads(Path(args.matrix).read_text(encoding="utf-8"))
    rows = harness.compare_algorithms(matrix, base_dir=Path(args.matrix).parent)
    harness.write_comparison(rows, args.out)
    failed = [r for r in rows if "error" in r]
    print(json.dumps({"cells": len(rows), "failed": len(failed), "out": args.out}))
    return 1 if failed else 0


_COMMANDS = {
    "gen-policy": _cmd_gen_policy,
    "gen-log": _cmd_gen_log,
    "run": _cmd_run,
    "shift": _cmd_shift,
    "compare": _cmd_compare,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - uniform machine-readable failure
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
