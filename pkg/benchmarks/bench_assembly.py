#!/usr/bin/env python3
"""Time the pair-matrix assembly with the numba kernels and the numpy fallback.

Usage:
    python3 benchmarks/bench_assembly.py [--h 0.18] [--mu 1] [--s 0.5] [--repeat 2]

Both backends are called in-process through ``get_backend``; the env flag
FRACLAB_DISABLE_NUMBA only changes which one is the default.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from fraclab.assembly import assemble_pair_matrix
from fraclab.kernels import get_backend
from fraclab.mesh import GradedFamilyConfig, build_aux_band, build_disk_mesh, default_R_aux
from fraclab.quadrature import KernelParams, QuadConfig


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=float, default=0.18)
    ap.add_argument("--mu", type=float, default=1.0)
    ap.add_argument("--s", type=float, default=0.5)
    ap.add_argument("--repeat", type=int, default=2)
    ap.add_argument("--skip-numpy", action="store_true", help="numpy is slow on big meshes")
    args = ap.parse_args(argv)

    mesh = build_disk_mesh(GradedFamilyConfig(mu=args.mu, h=args.h))
    band = build_aux_band(mesh, default_R_aux(mesh))
    params, quad = KernelParams(args.s), QuadConfig()
    print(f"mesh: N={mesh.n_dofs} triangles={mesh.n_triangles} band={len(band.triangles)} "
          f"s={args.s} quad={quad.label()}")

    # JIT warm-up on a tiny mesh so compilation is not timed
    tiny = build_disk_mesh(GradedFamilyConfig(h=0.5))
    assemble_pair_matrix(tiny, build_aux_band(tiny, default_R_aux(tiny)), params, quad,
                         backend=get_backend("numba"))

    results = {}
    for name in ("numba", "numpy"):
        if name == "numpy" and args.skip_numpy:
            continue
        be = get_backend(name)
        t, P = best_of(lambda: assemble_pair_matrix(mesh, band, params, quad, backend=be), args.repeat)
        results[name] = (t, P)
        print(f"{name:6s} {t:8.3f} s")

    if len(results) == 2:
        (tn, Pn), (tp, Pp) = results["numba"], results["numpy"]
        diff = np.abs(Pn - Pp).max() / np.abs(Pp).max()
        print(f"speed-up numba/numpy: {tp / tn:.1f}x   max rel. difference {diff:.1e}")


if __name__ == "__main__":
    main()
