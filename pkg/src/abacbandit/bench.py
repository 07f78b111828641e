"""Benchmark the compiled kernels against the pure-numpy fallback.

Runs the same seeded stream in two subprocesses, one per backend, and
reports wall-clock time plus the final loss of each (the losses must agree
exactly; the backends are bit-identical by construction).

    python -m abacbandit.bench --rounds 50000 --algo cover
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import tempfile
from pathlib import Path


def _worker(log_path: str, algo: str, seed: int, rounds: int) -> None:
    import time

    from . import data, harness

    log, schema = data.load_log(log_path)
    log = log[:rounds]
    cfg = harness.ExperimentConfig(
        schema=schema, log=log,
        algo=harness.bandit_config_from_dict({"algo": algo}, seed=seed), seed=seed)
    harness.run_stream(cfg)  # warm the JIT cache / interpreter
    t0 = time.perf_counter()
    result = harness.run_stream(cfg)
    wall = time.perf_counter() - t0
    from . import kernels
    print(json.dumps({"backend": kernels.BACKEND, "seconds": wall,
                      "kernel_seconds": result.seconds, "final_pvl": result.final_pvl}))


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rounds", type=int, default=50_000)
    parser.add_argument("--algo", default="cover",
                        choices=["epsilon", "first", "bag", "cover", "supervised"])
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--_worker", default=None, help=argparse.SUPPRESS)
    args = parser.parse_args(argv)

    if args._worker:
        _worker(args._worker, args.algo, args.seed, args.rounds)
        return 0

    from . import data

    cfg = data.RandomPolicyConfig(num_rules=10, num_attributes=10, total_values=34,
                                  target_log_size=70_000, seed=args.seed)
    policy = data.gen_random_policy(cfg)
    log = data.shuffle_log(data.gen_complete_log(policy), seed=args.seed)[:args.rounds]

    results = {}
    with tempfile.TemporaryDirectory() as tmp:
        log_path = Path(tmp) / "bench.csv"
        data.save_log(log, policy.schema, log_path)
        for backend in ("numba", "numpy"):
            env = dict(os.environ, ABACBANDIT_BACKEND=backend)
            out = subprocess.run(
                [sys.executable, "-m", "abacbandit.bench", "--_worker", str(log_path),
                 "--algo", args.algo, "--seed", str(args.seed), "--rounds", str(args.rounds)],
                capture_output=True, text=True, env=env, check=True)
            results[backend] = json.loads(out.stdout.strip().splitlines()[-1])

    nb, np_ = results["numba"], results["numpy"]
    agree = nb["final_pvl"] == np_["final_pvl"]
    print(f"{'backend':<8} {'stream seconds':>15} {'rounds/s':>12} {'final loss':>12}")
    for name in ("numba", "numpy"):
        r = results[name]
        rate = args.rounds / r["kernel_seconds"]
        print(f"{name:<8} {r['kernel_seconds']:>15.4f} {rate:>12.0f} {r['final_pvl']:>12.6f}")
    speedup = np_["kernel_seconds"] / nb["kernel_seconds"]
    print(f"speedup: {speedup:.1f}x; losses {'identical' if agree else 'DIFFER'}")
    return 0 if agree else 1


if __name__ == "__main__":
    sys.exit(main())
