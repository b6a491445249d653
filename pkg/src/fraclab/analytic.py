"""Closed-form reference data for (-Delta)^s u = 1 on the unit disk."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _check_s(s):
    if not 0.0 < s < 1.0:
        raise ValueError(f"fractional order must lie in (0, 1), got {s}")


def c_ds(d, s):
    """Normalization constant 2^{2s} s Gamma(s+d/2) / (pi^{d/2} Gamma(1-s))."""
    _check_s(s)
    return 4.0 ** s * s * math.gamma(s + 0.5 * d) / (math.pi ** (0.5 * d) * math.gamma(1.0 - s))


@dataclass(frozen=True)
class GetoorSolution:
    s: float
    d: int = 2

    def __post_init__(self):
        _check_s(self.s)

    @property
    def c_u(self):
        s, d = self.s, self.d
        return math.gamma(0.5 * d) / (4.0 ** s * math.gamma(0.5 * (d + 2 * s)) * math.gamma(1.0 + s))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        t = 1.0 - np.sum(x * x, axis=-1)
        return self.c_u * np.maximum(t, 0.0) ** self.s


def getoor_eval(x, s):
    return GetoorSolution(s)(x)


def getoor_l2_quantities(s):
    cu = GetoorSolution(s).c_u
    return {
        "integral_u": cu * math.pi / (s + 1.0),
        "l2norm_u": math.sqrt(cu * cu * math.pi / (2.0 * s + 1.0)),
    }


def nodal_interpolant(mesh, u):
    from .solver import DiscreteFunction
    vals = np.asarray(u(mesh.vertices[mesh.dof_vertices]), dtype=float)
    return DiscreteFunction(vals.reshape(mesh.n_dofs), mesh.fingerprint())
