#!/usr/bin/env python3
"""Compare the jitted and pure-numpy microaggregation kernels.

The backend is fixed at import time by PRIVFORGET_NUMBA, so each backend
runs in its own subprocess; the parent collects timings and prints a table.
A labels checksum over an integer-valued dataset is compared across
backends to demonstrate that both pick identical clusters.

Usage: bench_mdav.py [--repeat N] [--quick]
"""
import argparse
import hashlib
import json
import os
import subprocess
import sys
import time

GRID = [
    # (rows, dims, k)
    (500, 5, 3),
    (2_000, 10, 5),
    (5_000, 10, 10),
    (10_000, 20, 10),
]
QUICK_GRID = GRID[:2]


def worker(repeat: int, grid) -> None:
    import numpy as np

    from privforget import accel
    from privforget.kanon import mdav

    rows = []
    for n, d, k in grid:
        x = np.random.default_rng(42).normal(size=(n, d))
        mdav(x[: min(n, 200)], k)  # warm-up; pays the jit compile once
        timings = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            mdav(x, k)
            timings.append(time.perf_counter() - t0)
        rows.append({"n": n, "d": d, "k": k, "best": min(timings)})

    ints = np.random.default_rng(7).integers(0, 50, size=(3_000, 8)).astype(float)
    order = np.concatenate(mdav(ints, 5).clusters)
    checksum = hashlib.sha256(order.astype(np.int64).tobytes()).hexdigest()
    print(json.dumps({
        "backend": "numba" if accel.NUMBA_ENABLED else "numpy",
        "rows": rows,
        "checksum": checksum,
    }))


def run_backend(flag: str, repeat: int, quick: bool) -> dict:
    env = dict(os.environ, PRIVFORGET_NUMBA=flag)
    cmd = [sys.executable, __file__, "--worker", "--repeat", str(repeat)]
    if quick:
        cmd.append("--quick")
    out = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.splitlines()[-1])


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3, help="timed runs per size (best kept)")
    ap.add_argument("--quick", action="store_true", help="small sizes only")
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    grid = QUICK_GRID if args.quick else GRID
    if args.worker:
        worker(args.repeat, grid)
        return 0

    results = {}
    for flag, name in (("1", "numba"), ("0", "numpy")):
        r = run_backend(flag, args.repeat, args.quick)
        if name == "numba" and r["backend"] != "numba":
            print("numba not importable; timing the numpy kernel twice", file=sys.stderr)
        results[name] = r

    if results["numba"]["checksum"] != results["numpy"]["checksum"]:
        print("ERROR: backends disagree on integer data", file=sys.stderr)
        return 1

    print(f"{'rows':>7} {'dims':>5} {'k':>3} {'numba':>10} {'numpy':>10} {'speedup':>8}")
    for a, b in zip(results["numba"]["rows"], results["numpy"]["rows"]):
        speed = b["best"] / a["best"] if a["best"] else float("inf")
        print(
            f"{a['n']:>7} {a['d']:>5} {a['k']:>3} "
            f"{a['best']:>9.4f}s {b['best']:>9.4f}s {speed:>7.1f}x"
        )
    print("cluster checksums match across backends")
    return 0


if __name__ == "__main__":
    sys.exit(main())
