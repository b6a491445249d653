"""Acceptance criteria, one PASS/FAIL line each.

The study criteria share two runs: one on the uniform ladder (every s of fig1
and fig3) and one on the graded ladder (fig2 and fig4); each preset is then
scored from those records. Expect about an hour on one core. Skip with
``pytest -m "not acceptance"``. Set FRACLAB_ACCEPTANCE_OUT to keep the CSV,
rate and SVG files.
"""
import math
import os
import time

import numpy as np
import pytest

from fraclab.analytic import GetoorSolution
from fraclab.assembly import (assemble_pair_matrix, assemble_stiffness, faermann_inner_product,
                              symmetry_lemma_sides)
from fraclab.mesh import GradedFamilyConfig, build_aux_band, build_disk_mesh, default_R_aux
from fraclab.quadrature import KernelParams, tail_integral
from fraclab.quadrature.oracle import oracle_assembly
from fraclab.solver import solve_cholesky
from fraclab.study import PRESETS, StudyConfig, run_study, summarize

from .conftest import scaled

pytestmark = pytest.mark.acceptance

UNIFORM_S = (0.2, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
GRADED_S = (0.2, 0.4, 0.6, 0.8)

FIG1_BUDGET = 30 * 60.0
ORACLE_BUDGET = 5 * 60.0
ORACLE_S = (0.5, 0.8)


def report(capsys, number, passed, detail):
    with capsys.disabled():
        print(f"\n[criterion {number}] {'PASS' if passed else 'FAIL'}: {detail}", flush=True)


def _outdir(tmp_path_factory, name):
    root = os.environ.get("FRACLAB_ACCEPTANCE_OUT")
    if root:
        path = os.path.join(root, name)
        os.makedirs(path, exist_ok=True)
        return path
    return str(tmp_path_factory.mktemp(name))


@pytest.fixture(scope="session")
def uniform_run(tmp_path_factory):
    cfg = StudyConfig(preset="fig1", study="uniform", s_values=UNIFORM_S,
                      out=_outdir(tmp_path_factory, "uniform"))
    return run_study(cfg)


@pytest.fixture(scope="session")
def graded_run(tmp_path_factory):
    cfg = StudyConfig(preset="fig2", study="graded", s_values=GRADED_S,
                      out=_outdir(tmp_path_factory, "graded"))
    return run_study(cfg)


def _score(preset, run):
    cfg = StudyConfig(preset=preset, out=run.config.out)
    return summarize(cfg, run.records, run.failures)


def _slope_lines(res):
    p = res.config.preset_info
    parts, ok = [], not res.failures
    for s in res.config.s_values:
        r = res.rate(s, p.field)
        if r is None:
            parts.append(f"s={s:g} missing")
            ok = False
            continue
        ok &= bool(r.passed)
        parts.append(f"s={s:g} {r.slope:+.3f} (theory {r.theory:+.3f})")
    return ok, f"{p.field} slope within {p.tolerance:g}: " + ", ".join(parts)


def _check_preset(capsys, number, preset, run, extra=""):
    res = _score(preset, run)
    ok, detail = _slope_lines(res)
    report(capsys, number, ok, f"{preset} {detail}{extra}")
    assert ok, detail


def test_criterion1_fig1(capsys, uniform_run):
    p = PRESETS["fig1"]
    recs = [r for r in uniform_run.records if r.s in p.s_values]
    elapsed = sum(r.meta["t_total"] for r in recs)
    n_max = max(r.N for r in recs)
    res = _score("fig1", uniform_run)
    ok, detail = _slope_lines(res)
    ok_time = elapsed <= FIG1_BUDGET
    report(capsys, 1, ok and ok_time,
           f"fig1 {detail}; {len(p.levels)} levels up to N={n_max}; runtime {elapsed / 60:.1f} min")
    assert ok_time, f"fig1 took {elapsed:.0f}s"
    assert ok, detail


def test_criterion2_fig2(capsys, graded_run):
    _check_preset(capsys, 2, "fig2", graded_run)


def test_criterion3_fig3(capsys, uniform_run):
    _check_preset(capsys, 3, "fig3", uniform_run)


def test_criterion4_fig4(capsys, graded_run):
    _check_preset(capsys, 4, "fig4", graded_run)


def test_criterion5_interior_beats_global(capsys, uniform_run, graded_run):
    parts, ok = [], True
    for preset, run in (("fig3", uniform_run), ("fig4", graded_run)):
        checks = _score(preset, run).interior_checks()
        ok &= len(checks) == len(PRESETS[preset].s_values)
        for s, slope, glob, passed in checks:
            ok &= passed
            parts.append(f"{preset} s={s:g} {slope:+.3f} vs {glob:+.2f}{'' if passed else ' (x)'}")
    report(capsys, 5, ok, "local slope <= global energy slope - 0.1: " + ", ".join(parts))
    assert ok


def test_criterion6_oracle_equivalence(capsys):
    mesh = build_disk_mesh(GradedFamilyConfig(mu=1, h=0.5))
    assert mesh.n_triangles <= 60
    band = build_aux_band(mesh, default_R_aux(mesh))
    t0 = time.perf_counter()
    worst = {}
    for s in ORACLE_S:
        p = KernelParams(s)
        A = assemble_stiffness(mesh, band, p).A
        ref = oracle_assembly(mesh, p, tol=1e-9)
        worst[s] = float((np.abs(A - ref) / np.abs(ref)).max())
    elapsed = time.perf_counter() - t0
    ok = all(e <= 1e-5 for e in worst.values()) and elapsed <= ORACLE_BUDGET
    errs = ", ".join(f"s={s:g} {e:.1e}" for s, e in worst.items())
    report(capsys, 6, ok, f"{mesh.n_triangles} triangles, max entry rel. error {errs} "
                          f"(tol 1e-5), {elapsed:.0f}s")
    assert ok


def test_criterion7_identities(capsys, uniform_run, graded_run):
    mesh = build_disk_mesh(GradedFamilyConfig(mu=1, h=0.5))
    band = build_aux_band(mesh, default_R_aux(mesh))
    rng = np.random.default_rng(7)
    checks = {}

    gaps = [r.meta["galerkin_gap"] for r in uniform_run.records + graded_run.records]
    for s in (0.3, 0.8):
        system = assemble_stiffness(mesh, band, KernelParams(s))
        U = solve_cholesky(system).coeffs
        FU = system.F @ U
        gaps.append(abs(U @ system.A @ U - FU) / abs(FU))
    checks["galerkin"] = (max(gaps), 1e-10)

    worst = 0.0
    for s, lam in ((0.25, 0.5), (0.75, 3.0)):
        p = KernelParams(s)
        A = assemble_pair_matrix(mesh, band, p)
        A2 = assemble_pair_matrix(*scaled(mesh, band, lam), p)
        worst = max(worst, np.abs(A2 - lam ** (2 - 2 * s) * A).max() / np.abs(A2).max())
    checks["dilation"] = (worst, 1e-10)

    checks["tail"] = (max(abs(tail_integral((0.0, 0.0), 1.0, s) - math.pi / s) / (math.pi / s)
                          for s in (0.1, 0.3, 0.5, 0.7, 0.9)), 1e-12)

    fa, sym = 0.0, 0.0
    for s in (0.3, 0.7):
        p = KernelParams(s)
        v, w = rng.normal(size=(2, mesh.n_dofs))
        ref = v @ assemble_pair_matrix(mesh, band, p) @ w
        fa = max(fa, abs(faermann_inner_product(mesh, band, p, v, w) - ref) / abs(ref))
        left, right = symmetry_lemma_sides(mesh, v, w, p)
        sym = max(sym, abs(left - right) / abs(right))
    checks["faermann"] = (fa, 1e-6)
    checks["symmetry-lemma"] = (sym, 1e-6)

    ok = all(err <= tol for err, tol in checks.values())
    report(capsys, 7, ok, ", ".join(f"{k} {err:.1e} (tol {tol:g})" for k, (err, tol) in checks.items()))
    assert ok


def test_criterion8_origin_value(capsys, uniform_run):
    recs = sorted((r for r in uniform_run.records if r.s == 0.5), key=lambda r: r.N)
    exact = GetoorSolution(0.5).c_u
    assert exact == pytest.approx(2 / math.pi, rel=1e-14)
    errs = [abs(r.meta["u_origin"] - exact) for r in recs]
    at_origin = all(r.meta["origin_dist"] == 0.0 for r in recs)
    ok = len(recs) >= 4 and at_origin and all(b < a for a, b in zip(errs, errs[1:]))
    vals = ", ".join(f"N={r.N} {r.meta['u_origin']:.6f}" for r in recs)
    report(capsys, 8, ok, f"u_h(0) -> 2/pi = {exact:.6f}: {vals}; errors "
                          + " > ".join(f"{e:.1e}" for e in errs))
    assert ok
