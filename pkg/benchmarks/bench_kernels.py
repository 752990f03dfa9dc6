"""Compare the compiled and pure-Python packet-queue kernels.

    python3 benchmarks/bench_kernels.py [--ticks N]

Reports a queue micro-benchmark for each backend and the wall time of one
full desk-scenario run under each (the latter in a subprocess, since the
backend is chosen at import).
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from nfvscale import _kernels_py

try:
    from nfvscale import _kernels
except ImportError:
    _kernels = None

RUN_SNIPPET = """
import time
from nfvscale import harness, kernels
from nfvscale.config import load_config
cfg = load_config({cfg!r})
t = time.perf_counter()
m = harness.run(cfg)
print(kernels.BACKEND, time.perf_counter() - t, m.generated)
"""


def queue_bench(Q, ticks: int, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    flows = np.arange(16, dtype=np.int64)
    counts = rng.integers(0, 4, size=(ticks, 16)).astype(np.int64)
    outstanding = np.full(16, 1 << 40, dtype=np.int64)
    q = Q(200)
    t = time.perf_counter()
    for now in range(ticks):
        q.serve(now, flows, counts[now], 22, 200, outstanding)
    return time.perf_counter() - t


def full_run(cfg: str, pure: bool) -> str:
    env = dict(os.environ, NFVSCALE_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", RUN_SNIPPET.format(cfg=cfg)], env=env,
                         capture_output=True, text=True, check=True)
    return out.stdout.strip()


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--ticks", type=int, default=200_000)
    ap.add_argument("--config", default=os.path.join(os.path.dirname(__file__), "..", "configs", "desk_spiky.yaml"))
    args = ap.parse_args()

    py = queue_bench(_kernels_py.PacketQueue, args.ticks)
    print(f"queue  python  {py:8.3f} s  ({args.ticks} ticks)")
    if _kernels is None:
        print("queue  cython  (extension not built)")
    else:
        cy = queue_bench(_kernels.PacketQueue, args.ticks)
        print(f"queue  cython  {cy:8.3f} s  speedup x{py / cy:.1f}")

    for pure in (True, False):
        backend, secs, gen = full_run(os.path.abspath(args.config), pure).split()
        print(f"run    {backend:7s} {float(secs):8.3f} s  ({gen} packets)")


if __name__ == "__main__":
    main()
