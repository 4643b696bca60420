"""Compare the numba and pure-numpy kernel backends.

Runs each workload in a subprocess per backend (the backend is fixed at
import time) and prints a timing table.

    python3 benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import json
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from rlprune import kernels, fixtures, graph
from rlprune.backend import backend_name

def timeit(fn, repeats):
    fn()  # warmup (also triggers JIT on the numba path)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best

repeats = int(sys.argv[1])
rng = np.random.default_rng(0)
results = {"backend": backend_name()}

x = rng.standard_normal((16, 32, 32, 32)).astype(np.float32)
w = rng.standard_normal((32, 32, 3, 3)).astype(np.float32)
results["conv_fwd"] = timeit(lambda: kernels.conv2d_forward(x, w, 1, 1), repeats)

y = kernels.conv2d_forward(x, w, 1, 1)
gy = rng.standard_normal(y.shape).astype(np.float32)
results["conv_bwd"] = timeit(lambda: kernels.conv2d_backward(x, w, gy, 1, 1), repeats)

results["maxpool_fwd"] = timeit(lambda: kernels.maxpool_forward(x, 2, 2), repeats)
_, idx = kernels.maxpool_forward(x, 2, 2)
gp = rng.standard_normal((16, 32, 16, 16)).astype(np.float32)
results["maxpool_bwd"] = timeit(
    lambda: kernels.maxpool_backward(x, gp, idx, 2, 2), repeats)

m = fixtures.make_fixture("vgg-mini", classes=10, seed=0)
batch = rng.uniform(-1, 1, (32, 3, 32, 32)).astype(np.float32)
results["vgg_mini_fwd"] = timeit(lambda: graph.run_forward(m, batch), repeats)

def fwd_bwd():
    logits, _, tape = graph.run_forward(m, batch, mode="train", want_tape=True)
    graph.backward(m, tape, np.ones_like(logits))

results["vgg_mini_fwd_bwd"] = timeit(fwd_bwd, repeats)
print(json.dumps(results))
"""


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rows = {}
    for backend in ("numpy", "numba"):
        proc = subprocess.run(
            [sys.executable, "-c", WORKER, str(args.repeats)],
            env={"RLPRUNE_BACKEND": backend, "PATH": "/usr/bin:/bin:/usr/local/bin"},
            capture_output=True, text=True)
        if proc.returncode != 0:
            print(f"{backend}: failed\n{proc.stderr}", file=sys.stderr)
            continue
        rows[backend] = json.loads(proc.stdout.strip().splitlines()[-1])

    if not rows:
        sys.exit(1)
    keys = [k for k in next(iter(rows.values())) if k != "backend"]
    print(f"{'workload':<18} " + " ".join(f"{b + ' (s)':>12}" for b in rows)
          + ("   speedup" if len(rows) == 2 else ""))
    for k in keys:
        line = f"{k:<18} " + " ".join(f"{rows[b][k]:>12.5f}" for b in rows)
        if len(rows) == 2:
            line += f"   {rows['numpy'][k] / rows['numba'][k]:>6.2f}x"
        print(line)


if __name__ == "__main__":
    main()
