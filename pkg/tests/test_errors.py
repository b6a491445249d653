import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraclab.analytic import GetoorSolution, nodal_interpolant
from fraclab.assembly import assemble_stiffness, assemble_subdomain_gram
from fraclab.errors import StudyRecord, energy_error, fit_rate, l2_error, local_hs_error
from fraclab.mesh import GradedFamilyConfig, ball_submesh, build_aux_band, build_disk_mesh, default_R_aux
from fraclab.quadrature import KernelParams
from fraclab.solver import solve_cholesky


def records(N, err, field="err_l2"):
    return [StudyRecord("t", "custom", 0.5, 1.0, i, 0.1, int(n), **{field: float(e)})
            for i, (n, e) in enumerate(zip(N, err))]


def test_exact_power_law():
    N = np.array([100, 400, 1600, 6400])
    fit = fit_rate(records(N, N ** -0.75), "err_l2")
    assert fit.slope == pytest.approx(-0.75, abs=1e-12)
    assert fit.stderr == pytest.approx(0.0, abs=1e-12)
    assert fit.n_used == 4


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), c=st.floats(0.01, 100.0))
def test_noisy_power_law(seed, c):
    rng = np.random.default_rng(seed)
    N = np.array([100, 250, 600, 1500, 4000])
    err = c * N ** -0.5 * (1 + 0.01 * rng.uniform(-1, 1, len(N)))
    assert fit_rate(records(N, err), "err_l2").slope == pytest.approx(-0.5, abs=0.02)


def test_fit_preconditions():
    with pytest.raises(ValueError):
        fit_rate(records([10, 20], [1.0, 0.5]), "err_l2")
    with pytest.raises(ValueError):
        fit_rate(records([10, 20, 40], [1.0, 0.0, 0.1]), "err_l2")
    with pytest.raises(ValueError):
        StudyRecord("t", "custom", 0.5, 1.0, 0, 0.1, 10, err_l2=-1.0)


def test_outlying_coarse_level_dropped():
    N = np.array([50, 100, 400, 1600, 6400])
    err = N ** -0.5
    err[0] *= 5
    fit = fit_rate(records(N, err), "err_l2")
    assert fit.dropped == (0,)
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)


def test_l2_error_basic(coarse_mesh):
    u = GetoorSolution(0.5)
    I = nodal_interpolant(coarse_mesh, u)
    # a piecewise-linear function against its own lift
    lift = lambda x: _eval_p1(coarse_mesh, I.coeffs, x)
    assert l2_error(coarse_mesh, I, lift) <= 1e-12
    zero = np.zeros(coarse_mesh.n_dofs)
    got = l2_error(coarse_mesh, zero, lambda x: np.ones(len(x)))
    assert got == pytest.approx(math.sqrt(coarse_mesh.areas().sum()), rel=1e-13)
    with pytest.raises(ValueError):
        l2_error(coarse_mesh, np.zeros(3), u)


def _eval_p1(mesh, coeffs, x):
    nodal = np.zeros(len(mesh.vertices))
    nodal[mesh.dof_vertices] = coeffs
    out = np.zeros(len(x))
    T = mesh.corners()
    for t in range(mesh.n_triangles):
        J = np.stack([T[t, 1] - T[t, 0], T[t, 2] - T[t, 0]], 1)
        uv = np.linalg.solve(J, (x - T[t, 0]).T).T
        lam = np.column_stack([1 - uv.sum(1), uv])
        inside = (lam >= -1e-12).all(1)
        out[inside] = lam[inside] @ nodal[mesh.triangles[t]]
    return out


def test_l2_interpolation_decay():
    s = 0.5
    u = GetoorSolution(s)
    errs, hs = [], (0.25, 0.125, 0.0625)
    for h in hs:
        m = build_disk_mesh(GradedFamilyConfig(h=h))
        errs.append(l2_error(m, nodal_interpolant(m, u), u, boundary_levels=3))
    rates = np.diff(np.log(errs)) / np.diff(np.log(hs))
    # u in H^{s+1/2-eps}: interpolation rate ~ h^{s+1/2} up to logs
    assert np.all(rates > 0.8) and np.all(rates < 1.4)


@pytest.fixture(scope="module")
def uniform_solves():
    out = []
    for h in (0.35, 0.25, 0.18):
        m = build_disk_mesh(GradedFamilyConfig(h=h))
        sysm = assemble_stiffness(m, build_aux_band(m, default_R_aux(m)), KernelParams(0.6))
        out.append((m, sysm, solve_cholesky(sysm)))
    return out


def test_energy_error_monotone(uniform_solves):
    errs = [energy_error(sysm, U, 0.6) for _, sysm, U in uniform_solves]
    assert all(e > 0 for e in errs)
    assert errs[0] > errs[1] > errs[2]


def test_local_error_zero_cases(coarse_mesh):
    D = ball_submesh(coarse_mesh, (0, 0), 0.75)
    gram = assemble_subdomain_gram(coarse_mesh, D, KernelParams(0.5))
    assert local_hs_error(gram, np.zeros(coarse_mesh.n_dofs)) == 0.0
    assert local_hs_error(gram, np.full(coarse_mesh.n_dofs, 3.0)) <= 1e-6
    assert local_hs_error(gram, np.random.default_rng(0).normal(size=coarse_mesh.n_dofs)) > 0
    with pytest.raises(ValueError):
        local_hs_error(gram, np.zeros(2))
