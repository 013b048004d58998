"""Time the ray-tracing and coupling kernels with numba on and off.

Each backend runs in a fresh interpreter because FRACDG_DISABLE_NUMBA is read
at import time. Usage: python benchmarks/bench_kernels.py [--sizes 4,8,16] [--order 2]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from fracdg import _jit
from fracdg.basis import build_reference_basis
from fracdg.fracint import RayCache, assemble_frac_coupling
from fracdg.mesh import generate_structured

sizes, order, repeat = json.loads(sys.argv[1])
basis = build_reference_basis(order)
if _jit.NUMBA_ENABLED:  # compile outside the timed region
    m0 = generate_structured(2)
    assemble_frac_coupling(m0, basis, 0.5, "x", cache=RayCache(m0, basis))
out = []
for m in sizes:
    mesh = generate_structured(m)
    best_trace = best_couple = np.inf
    F = None
    for _ in range(repeat):
        cache = RayCache(mesh, basis)
        t0 = time.perf_counter()
        cache.volume_bundle("x", "left")
        t1 = time.perf_counter()
        F = assemble_frac_coupling(mesh, basis, 0.5, "x", cache=cache).matrix
        t2 = time.perf_counter()
        best_trace = min(best_trace, t1 - t0)
        best_couple = min(best_couple, t2 - t1)
    out.append({"m": m, "K": mesh.K, "trace": best_trace, "couple": best_couple,
                "checksum": float(np.abs(F).sum())})
print(json.dumps({"numba": _jit.NUMBA_ENABLED, "rows": out}))
"""


def run(disable: bool, sizes, order, repeat):
    env = dict(os.environ)
    env["FRACDG_DISABLE_NUMBA"] = "1" if disable else "0"
    proc = subprocess.run([sys.executable, "-c", WORKER, json.dumps([sizes, order, repeat])],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="4,8,16")
    ap.add_argument("--order", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    sizes = [int(s) for s in args.sizes.split(",")]
    fast = run(False, sizes, args.order, args.repeat)
    slow = run(True, sizes, args.order, args.repeat)
    print(f"order N={args.order}, mu=0.5, x-axis left-sided coupling")
    print(f"{'K':>6} {'trace numba':>12} {'trace numpy':>12} {'couple numba':>13} {'couple numpy':>13} {'|dF| rel':>9}")
    for a, b in zip(fast["rows"], slow["rows"]):
        rel = abs(a["checksum"] - b["checksum"]) / b["checksum"]
        print(f"{a['K']:>6} {a['trace']:>12.4f} {b['trace']:>12.4f} {a['couple']:>13.4f} {b['couple']:>13.4f} {rel:>9.1e}")
    if not fast["numba"]:
        print("note: numba unavailable, both columns ran the numpy path")
    return 0


if __name__ == "__main__":
    sys.exit(main())
