"""Legendre Galerkin space on [0, L] with homogeneous Dirichlet conditions.

Basis functions are ``psi_j = L_j - L_{j+2}`` for ``j = 0..N-2``, which
vanish at both endpoints and give a pentadiagonal mass matrix (nonzeros on
the main and second off-diagonals only) and a diagonal stiffness matrix.
Closed forms on the reference interval [-1, 1]:

    (psi_j, psi_j)     = 2/(2j+1) + 2/(2j+5)
    (psi_j, psi_{j+2}) = -2/(2j+5)
    (psi_j', psi_j')   = 4j + 6

with the affine map ``z = L (zhat + 1) / 2`` contributing L/2 to mass
entries and 2/L to stiffness entries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "QuadratureRule",
    "SpectralSpace",
    "legendre_eval",
    "gauss_rule",
    "build_space",
    "project_forcing",
    "eval_expansion",
    "l2_error",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre points and weights mapped to [0, L]."""

    points: np.ndarray
    weights: np.ndarray
    degree: int  # exact for polynomials up to this degree


def legendre_eval(j: int, zhat) -> float | np.ndarray:
    """Legendre polynomial ``L_j`` at reference coordinates via the
    three-term recurrence; satisfies ``|L_j(+-1)| = 1``."""
    if j < 0:
        raise ValueError(f"degree must be nonnegative, got {j}")
    zhat = np.asarray(zhat, dtype=np.float64)
    prev = np.ones_like(zhat)
    if j == 0:
        return prev if prev.ndim else float(prev)
    cur = zhat.copy()
    for m in range(1, j):
        prev, cur = cur, ((2 * m + 1) * zhat * cur - m * prev) / (m + 1)
    return cur if cur.ndim else float(cur)


def _legendre_table(zhat: np.ndarray, j_max: int) -> np.ndarray:
    """Values of L_0..L_{j_max} at the given points, shape (npts, j_max+1)."""
    table = np.empty((len(zhat), j_max + 1))
    table[:, 0] = 1.0
    if j_max >= 1:
        table[:, 1] = zhat
    for m in range(1, j_max):
        table[:, m + 1] = ((2 * m + 1) * zhat * table[:, m] - m * table[:, m - 1]) / (m + 1)
    return table


def _basis_table(zhat: np.ndarray, degree: int) -> np.ndarray:
    """psi_j(zhat) for j = 0..degree-2, shape (npts, degree-1)."""
    leg = _legendre_table(zhat, degree)
    return leg[:, : degree - 1] - leg[:, 2: degree + 1]


def gauss_rule(n: int, length: float) -> QuadratureRule:
    """n-point Gauss-Legendre rule on [0, length], exact to degree 2n-1."""
    if n < 1:
        raise ValueError(f"rule size must be positive, got {n}")
    zhat, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(points=length * (zhat + 1.0) / 2.0,
                          weights=w * length / 2.0,
                          degree=2 * n - 1)


@dataclass(frozen=True)
class SpectralSpace:
    """Galerkin space of degree N on [0, L] with its matrices and rule.

    Matrices are stored in banded/diagonal form: ``mass_main`` and
    ``mass_off`` are the main and second diagonals of the symmetric mass
    matrix, ``stiff_diag`` the diagonal stiffness entries, all in physical
    scaling.  ``basis_at_rule`` caches psi values at the quadrature points.
    """

    degree: int
    length: float
    mass_main: np.ndarray
    mass_off: np.ndarray
    stiff_diag: np.ndarray
    rule: QuadratureRule
    basis_at_rule: np.ndarray

    @property
    def dim(self) -> int:
        return self.degree - 1

    def apply_mass(self, x: np.ndarray) -> np.ndarray:
        """Pentadiagonal product S @ x along the last axis."""
        y = self.mass_main * x
        y[..., :-2] += self.mass_off * x[..., 2:]
        y[..., 2:] += self.mass_off * x[..., :-2]
        return y

    def apply_stiffness(self, x: np.ndarray) -> np.ndarray:
        return self.stiff_diag * x

    def mass_matrix(self) -> np.ndarray:
        """Dense copy of S (for oracles and small direct solves)."""
        s = np.diag(self.mass_main)
        s += np.diag(self.mass_off, 2) + np.diag(self.mass_off, -2)
        return s

    def stiffness_matrix(self) -> np.ndarray:
        return np.diag(self.stiff_diag)


def build_space(degree: int, length: float) -> SpectralSpace:
    """Assemble the space of polynomial degree ``degree`` on [0, length].

    The quadrature rule has 2*degree points, over-resolving products of a
    smooth forcing with any basis function.
    """
    if degree < 3:
        raise ValueError(f"spectral degree must be at least 3, got {degree}")
    if length <= 0:
        raise ValueError(f"domain length must be positive, got {length}")
    j = np.arange(degree - 1, dtype=np.float64)
    mass_main = (2.0 / (2 * j + 1) + 2.0 / (2 * j + 5)) * (length / 2.0)
    mass_off = (-2.0 / (2 * j[:-2] + 5)) * (length / 2.0)
    stiff_diag = (4 * j + 6) * (2.0 / length)
    rule = gauss_rule(2 * degree, length)
    zhat = 2.0 * rule.points / length - 1.0
    return SpectralSpace(degree=degree, length=length, mass_main=mass_main,
                         mass_off=mass_off, stiff_diag=stiff_diag, rule=rule,
                         basis_at_rule=_basis_table(zhat, degree))


def project_profile(space: SpectralSpace, values: np.ndarray) -> np.ndarray:
    """Inner products (values, psi_l) from samples at the rule points."""
    return space.basis_at_rule.T @ (space.rule.weights * values)


def project_forcing(space: SpectralSpace, f: Callable, t: float) -> np.ndarray:
    """Vector of inner products (f(., t), psi_l), l = 0..N-2."""
    return project_profile(space, np.asarray(f(space.rule.points, t), dtype=np.float64))


def eval_expansion(space: SpectralSpace, coefs: np.ndarray, z) -> np.ndarray:
    """Evaluate ``sum_j coefs[j] psi_j`` at physical points z."""
    coefs = np.asarray(coefs, dtype=np.float64)
    if coefs.shape[-1] != space.dim:
        raise ValueError(
            f"expected {space.dim} coefficients, got {coefs.shape[-1]}")
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    zhat = 2.0 * z / space.length - 1.0
    return _basis_table(zhat, space.degree) @ coefs


def l2_error(space: SpectralSpace, coefs: np.ndarray, exact: Callable) -> float:
    """L2(0, L) distance between the expansion and ``exact(z)``.

    Quadrature uses the space's 2N-point rule, which integrates the
    polynomial part exactly and over-resolves the smooth exact solutions
    used throughout.
    """
    diff = space.basis_at_rule @ np.asarray(coefs, dtype=np.float64)
    diff -= exact(space.rule.points)
    return float(np.sqrt(np.sum(space.rule.weights * diff * diff)))
