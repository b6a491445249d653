"""Command line: ``fraclab run | validate-mesh | oracle-check``.

Exit codes: 0 success, 2 a comparison failed, 1 runtime error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
import time

import numpy as np

from .study import StudyConfig, load_config, run_study

log = logging.getLogger("fraclab")

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2

def _add_config_flags(p):
    for f in dataclasses.fields(StudyConfig):
        if f.name in ("s_values", "levels"):
            continue
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, default=None,
                       help=f"override config key {f.name}")
    p.add_argument("--s", dest="s_values", default=None, help="comma-separated s values")
    p.add_argument("--levels", "--h", dest="levels", default=None,
                   help="comma-separated interior mesh sizes, coarse to fine")


def _overrides(args):
    from .study import _coerce
    out = {}
    for f in dataclasses.fields(StudyConfig):
        raw = getattr(args, f.name, None)
        if raw is not None:
            out[f.name] = _coerce(f.name, raw)
    return out


def cmd_run(args):
    overrides = _overrides(args)
    cfg = load_config(args.config, overrides) if args.config else StudyConfig(**overrides)

    def show(rec):
        print(f"s={rec.s:g} level={rec.level} h={rec.h:g} N={rec.N} "
              f"L2={rec.err_l2:.4e} energy={rec.err_energy:.4e} local={rec.err_local_hs:.4e} "
              f"({rec.meta['t_total']:.1f}s)", flush=True)

    res = run_study(cfg, progress=None if args.quiet else show)
    for r in res.rates:
        verdict = "" if r.passed is None else (" PASS" if r.passed else " FAIL")
        ref = "" if math.isnan(r.theory) else f" theory {r.theory:+.3f} tol {r.tolerance:g}"
        print(f"s={r.s:g} {r.field}: slope {r.slope:+.3f} +- {r.stderr:.3f}{ref}{verdict}")
    for s, slope, glob, ok in res.interior_checks():
        print(f"s={s:g} interior slope {slope:+.3f} vs global {glob:+.2f}: {'PASS' if ok else 'FAIL'}")
    for s, level, h, msg in res.failures:
        print(f"s={s:g} level {level} (h={h:g}) aborted: {msg}", file=sys.stderr)
    print("outputs: " + ", ".join(res.paths.values()))
    return EXIT_OK if res.passed else EXIT_FAILED


def cmd_validate_mesh(args):
    from .mesh import GradedFamilyConfig, read_mesh, validate_mesh
    mesh = read_mesh(args.file)
    h = args.h if args.h is not None else float(mesh.diameters().max())
    report = validate_mesh(mesh, GradedFamilyConfig(mu=args.mu, h=h))
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_FAILED


def _random_triangle(rng, scale=1.0):
    while True:
        T = rng.uniform(-scale, scale, size=(3, 2))
        e1, e2 = T[1] - T[0], T[2] - T[0]
        area = 0.5 * (e1[0] * e2[1] - e1[1] * e2[0])
        sides = np.linalg.norm(T - np.roll(T, 1, axis=0), axis=1)
        if abs(area) > 0.15 * sides.max() ** 2:
            return T if area > 0 else T[[0, 2, 1]]


def random_pair(rng, kind):
    """A well-shaped triangle pair of the requested kind
    ('identical', 'edge', 'vertex' or 'disjoint')."""
    Ta = _random_triangle(rng)
    if kind == "identical":
        return Ta, Ta.copy()
    c = Ta.mean(0)
    if kind == "edge":
        # apex on the far side of edge (0, 1)
        mid = 0.5 * (Ta[0] + Ta[1])
        apex = mid + (mid - Ta[2]) * rng.uniform(0.6, 1.4) + rng.normal(0, 0.05, 2)
        return Ta, np.array([Ta[1], Ta[0], apex])
    if kind == "vertex":
        v = Ta[0]
        ang = math.atan2(*(v - c)[::-1]) + rng.uniform(-0.6, 0.6)
        r = rng.uniform(0.5, 1.5)
        p1 = v + r * np.array([math.cos(ang - 0.5), math.sin(ang - 0.5)])
        p2 = v + r * np.array([math.cos(ang + 0.5), math.sin(ang + 0.5)])
        return Ta, np.array([v, p1, p2])
    if kind == "disjoint":
        Tb = _random_triangle(rng)
        d = np.linalg.norm(Ta - Ta.mean(0), axis=1).max() + np.linalg.norm(Tb - Tb.mean(0), axis=1).max()
        ang = rng.uniform(0, 2 * math.pi)
        shift = (d + rng.uniform(0.2, 2.0)) * np.array([math.cos(ang), math.sin(ang)])
        return Ta, Tb - Tb.mean(0) + c + shift
    raise ValueError(f"unknown pair kind {kind!r}")


def oracle_suite(seed, s_values=(0.25, 0.5, 0.75), kinds=("identical", "edge", "vertex", "disjoint"),
                 tol=1e-6):
    """Compare pair_interaction with the brute-force oracle on random pairs.
    Yields (kind, s, relative error, passed)."""
    from .quadrature import KernelParams, QuadConfig, pair_interaction
    from .quadrature.oracle import oracle_pair_interaction
    rng = np.random.default_rng(seed)
    cfg = QuadConfig()
    for kind in kinds:
        Ta, Tb = random_pair(rng, kind)
        for s in s_values:
            params = KernelParams(s)
            got = pair_interaction(Ta, Tb, params=params, config=cfg)
            ref = oracle_pair_interaction(Ta, Tb, params, tol=1e-9)
            err = float(np.abs(got - ref).max() / np.abs(ref).max())
            yield kind, s, err, err <= tol


def cmd_oracle_check(args):
    ok = True
    for kind, s, err, passed in oracle_suite(args.seed, tol=args.tol):
        ok &= passed
        print(f"{kind:9s} s={s:.2f} rel.err {err:.2e} {'PASS' if passed else 'FAIL'}", flush=True)
    return EXIT_OK if ok else EXIT_FAILED


def build_parser():
    p = argparse.ArgumentParser(prog="fraclab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a convergence study")
    run.add_argument("--config", help="flat key = value config file")
    run.add_argument("--quiet", action="store_true")
    _add_config_flags(run)
    run.set_defaults(func=cmd_run)

    vm = sub.add_parser("validate-mesh", help="check shape regularity and grading of a mesh file")
    vm.add_argument("file")
    vm.add_argument("--mu", type=float, default=1.0)
    vm.add_argument("--h", type=float, default=None, help="interior mesh size (default: max diameter)")
    vm.set_defaults(func=cmd_validate_mesh)

    oc = sub.add_parser("oracle-check", help="compare pair quadrature with the brute-force oracle")
    oc.add_argument("--seed", type=int, default=0)
    oc.add_argument("--tol", type=float, default=1e-6)
    oc.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except Exception as exc:  # noqa: BLE001 - map every failure to exit code 1
        print(f"error: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return EXIT_ERROR
    log.info("done in %.1fs", time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
