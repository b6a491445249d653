import numpy as np
import pytest

from fraclab.mesh import (AuxBand, GradedFamilyConfig, TriMesh, build_aux_band, build_disk_mesh,
                          default_R_aux)


@pytest.fixture(scope="session")
def coarse_mesh():
    """41 triangles, 13 dofs: small enough for brute-force oracles."""
    return build_disk_mesh(GradedFamilyConfig(mu=1, h=0.5))


@pytest.fixture(scope="session")
def coarse_band(coarse_mesh):
    return build_aux_band(coarse_mesh, default_R_aux(coarse_mesh))


@pytest.fixture(scope="session")
def hexagon_mesh():
    """One interior dof at the origin, six boundary vertices on the unit circle."""
    th = np.pi / 3 * np.arange(6)
    verts = np.vstack([[0.0, 0.0], np.stack([np.cos(th), np.sin(th)], 1)])
    tris = np.array([[0, 1 + k, 1 + (k + 1) % 6] for k in range(6)])
    bnd = np.array([False] + [True] * 6)
    return TriMesh(verts, tris, bnd, 1.0)


def scaled(mesh, band, lam):
    m = TriMesh(mesh.vertices * lam, mesh.triangles.copy(), mesh.boundary_vertex.copy(),
                mesh.interior_h * lam)
    b = AuxBand(band.vertices * lam, band.triangles, band.R_aux * lam, band.outer_polygon,
                band.n_mesh_vertices)
    return m, b


def random_triangle(rng, scale=1.0):
    from fraclab.cli import _random_triangle
    return _random_triangle(rng, scale)
