"""Time the compiled kernels against the NumPy fallback on identical inputs.

    python benchmarks/bench_core.py [--n 8] [--repeat 5] [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from artifact import _core_py
from artifact.collision import GammaEvaluator
from artifact.grids import build_velocity_grid

try:
    from artifact import _core
except ImportError:
    _core = None


def _cases(n: int, seed: int):
    rng = np.random.default_rng(seed)
    grid = build_velocity_grid(6.0, n)
    nodes = grid.nodes
    ck = (1.0, 1.0)

    m, nx = 64, 400
    lam = np.sort(rng.uniform(0.01, 5.0, m))
    x = np.concatenate([[0.0], np.cumsum(rng.uniform(0.01, 0.2, nx - 1))])
    s = rng.standard_normal((nx, m))
    c0 = rng.standard_normal(m)

    ge = GammaEvaluator(grid, method="product", seed=seed)
    F = rng.standard_normal((4, grid.size)) * np.exp(-0.5 * np.sum(nodes**2, axis=1))
    ga = (F * ge._inv_sm, F * ge._inv_sm, ge.base1, ge.frac1, ge.base2, ge.frac2, ge.weight, ge.ptr, grid.shape)

    return {
        "kernel_block": lambda mod: mod.kernel_block(nodes, nodes, *ck),
        "exp_sweep": lambda mod: mod.exp_sweep(lam, x, s, c0, 1e-3, True),
        "gamma_gain": lambda mod: mod.gamma_gain(*ga, 1, None),
    }


def run(n: int, repeat: int, seed: int = 0) -> list[dict]:
    rows = []
    for name, fn in _cases(n, seed).items():
        ref = fn(_core_py)
        t_py = min(timeit.repeat(lambda: fn(_core_py), number=1, repeat=repeat))
        row = {"kernel": name, "n": n, "python_s": t_py, "cython_s": None, "speedup": None, "max_abs_diff": None}
        if _core is not None:
            out = fn(_core)
            t_c = min(timeit.repeat(lambda: fn(_core), number=1, repeat=repeat))
            scale = max(float(np.max(np.abs(ref))), 1e-300)
            row.update(cython_s=t_c, speedup=t_py / t_c, max_abs_diff=float(np.max(np.abs(out - ref))) / scale)
        rows.append(row)
    return rows


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=8, help="velocity nodes per axis")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--json", help="also write the rows as JSON")
    a = p.parse_args(argv)
    rows = run(a.n, a.repeat)
    if _core is None:
        print("compiled core not built; timing the fallback only", file=sys.stderr)
    print(f"{'kernel':<14}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}{'rel diff':>11}")
    for r in rows:
        c = "-" if r["cython_s"] is None else f"{r['cython_s']:.4f}"
        sp = "-" if r["speedup"] is None else f"{r['speedup']:.1f}x"
        d = "-" if r["max_abs_diff"] is None else f"{r['max_abs_diff']:.1e}"
        print(f"{r['kernel']:<14}{r['python_s']:>12.4f}{c:>12}{sp:>10}{d:>11}")
    if a.json:
        with open(a.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
