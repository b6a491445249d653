"""Dense SPD solves for the stiffness system."""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.sparse.linalg import cg

RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    pass


class PivotError(SolverError):
    """Cholesky hit a non-positive pivot; ``index`` is the 0-based row."""

    def __init__(self, index):
        super().__init__(f"non-positive Cholesky pivot at dof {index}")
        self.index = index


@dataclass(frozen=True)
class DiscreteFunction:
    coeffs: np.ndarray
    fingerprint: str = ""

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def __len__(self):
        return len(self.coeffs)

    def check(self, mesh):
        if len(self.coeffs) != mesh.n_dofs:
            raise ValueError(f"{len(self.coeffs)} coefficients for {mesh.n_dofs} dofs")
        if self.fingerprint and self.fingerprint != mesh.fingerprint():
            raise ValueError("function belongs to a different mesh")


def _relres(A, U, F):
    nf = np.linalg.norm(F)
    r = np.linalg.norm(A @ U - F)
    return r / nf if nf > 0 else r


def solve_cholesky(system):
    A, F = system.A, system.F
    if len(F) == 0:
        return DiscreteFunction(np.zeros(0), system.fingerprint)
    try:
        fac = cho_factor(A, lower=False, check_finite=True)
    except LinAlgError as exc:
        # LAPACK reports the 1-based leading minor that failed
        m = re.search(r"(\d+)", str(exc))
        raise PivotError(int(m.group(1)) - 1 if m else -1) from exc
    U = cho_solve(fac, F)
    res = _relres(A, U, F)
    if res > RESIDUAL_TOL:
        raise SolverError(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:g}")
    return DiscreteFunction(U, system.fingerprint)


def solve_cg(system, tol=1e-10, max_iter=None):
    A, F = system.A, system.F
    n = len(F)
    if max_iter is None:
        max_iter = 10 * max(n, 1)
    if not np.any(F):
        return DiscreteFunction(np.zeros(n), system.fingerprint)
    U, info = cg(A, F, rtol=tol, atol=0.0, maxiter=max_iter)
    if info != 0:
        raise SolverError(f"CG did not reach rtol={tol:g} in {max_iter} iterations")
    return DiscreteFunction(U, system.fingerprint)
