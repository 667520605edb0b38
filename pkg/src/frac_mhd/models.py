"""Concrete problem definitions: a manufactured-solution benchmark and the
physical MHD flow/heat problem on a truncated half-line.

Both problems are posed in the transformed homogeneous-Dirichlet form
consumed by the solver.  The physical problem lifts the wall data
``u(0,t) = t^3`` and ``theta(0,t) = t^2`` with the affine profile
``(1 - z/L)``, and its forcing terms are generated mechanically by
applying the governing operators to the lifting, so every coefficient is
reproducible from first principles.  The temperature equation is
integrated by order beta before discretization; with zero initial data
this turns the relaxation form into the D^(1-beta)/D^(-beta) form and
maps the forcing p to ``(1/lambda) D^(-beta) p``, computed analytically
term by term (every term is a pure time power times a space profile).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.special import gamma as gamma_fn

from .solver import ProblemCoefficients

__all__ = [
    "ForcingTerm",
    "SeparableForcing",
    "PhysicalParams",
    "ProblemSpec",
    "frac_integral_power",
    "example1_problem",
    "example2_problem",
    "physical_coefficients",
    "reconstruct_fields",
]


def frac_integral_power(mu: float, s: float) -> tuple[float, float]:
    """Riemann-Liouville integral of a pure power: D^(-s) t^mu.

    Returns the coefficient/exponent pair of the result,
    ``(Gamma(mu+1)/Gamma(mu+1+s), mu+s)``.
    """
    if mu <= -1.0:
        raise ValueError(f"power exponent must exceed -1, got {mu}")
    if s <= 0.0:
        raise ValueError(f"integral order must be positive, got {s}")
    return gamma_fn(mu + 1.0) / gamma_fn(mu + 1.0 + s), mu + s


@dataclass(frozen=True)
class ForcingTerm:
    """One separable forcing contribution ``coefficient * t^exponent * profile(z)``."""

    coefficient: float
    exponent: float
    profile: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SeparableForcing:
    """Sum of time-power times space-profile terms.

    The solver caches one projection per profile and rescales it with the
    time powers each step, so long runs never re-integrate in space.
    """

    terms: tuple[ForcingTerm, ...]

    def __call__(self, z, t: float):
        z = np.asarray(z, dtype=np.float64)
        out = np.zeros_like(z)
        for term in self.terms:
            out += term.coefficient * t ** term.exponent * term.profile(z)
        return out

    def fractional_integral(self, s: float) -> "SeparableForcing":
        """Apply D^(-s) analytically to every term."""
        mapped = []
        for term in self.terms:
            coef, exponent = frac_integral_power(term.exponent, s)
            mapped.append(ForcingTerm(term.coefficient * coef, exponent, term.profile))
        return SeparableForcing(tuple(mapped))

    def scaled(self, factor: float) -> "SeparableForcing":
        return SeparableForcing(tuple(
            replace(term, coefficient=factor * term.coefficient) for term in self.terms))


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensionless groups of the physical flow/heat problem.

    Defaults are the reference parameter point used throughout the
    simulation studies: m=1, M=2, K=2, R=1, Pr=2, H=1, Gr=10, lambda=1,
    alpha=1, on z in [0, 4] up to t = 0.5.
    """

    alpha: float = 1.0
    lam: float = 1.0
    M: float = 2.0
    m: float = 1.0
    K_perm: float = 2.0
    Gr: float = 10.0
    R: float = 1.0
    Pr: float = 2.0
    H: float = 1.0
    gamma: float = 0.8
    beta: float = 0.6
    length: float = 4.0
    t_final: float = 0.5

    def __post_init__(self):
        if self.Pr <= 0.0:
            raise ValueError(f"Pr must be positive, got {self.Pr}")
        if self.lam <= 0.0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.K_perm <= 0.0:
            raise ValueError(f"permeability must be positive, got {self.K_perm}")
        if self.M < 0.0:
            raise ValueError(f"Hartmann number must be nonnegative, got {self.M}")
        if self.length <= 0.0:
            raise ValueError(f"domain length must be positive, got {self.length}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")


@dataclass(frozen=True)
class ProblemSpec:
    """A transformed coupled problem ready for the solver.

    ``exact_*`` are closed-form solutions of the transformed system when
    available (manufactured case) and None otherwise.  ``lift_*`` are the
    additive liftings that reconstruct physical fields from the computed
    homogeneous-Dirichlet ones; the v component is never lifted.
    """

    name: str
    coefficients: ProblemCoefficients
    length: float
    t_final: float
    forcing_f: SeparableForcing | Callable | None
    forcing_g: SeparableForcing | Callable | None
    forcing_p_tilde: SeparableForcing | Callable | None
    exact_u: Callable | None = None
    exact_v: Callable | None = None
    exact_theta: Callable | None = None
    lift_u: Callable | None = None
    lift_theta: Callable | None = None
    max_t_final: float | None = None

    def check_t_final(self, t_final: float) -> None:
        if self.max_t_final is not None and t_final > self.max_t_final + 1e-12:
            raise ValueError(
                f"{self.name} boundary data is only valid for "
                f"t <= {self.max_t_final}; requested final time {t_final}")


def reconstruct_fields(spec: ProblemSpec, u_vals, v_vals, theta_vals, z, t: float):
    """Add the boundary lifting back to computed field samples."""
    z = np.asarray(z, dtype=np.float64)
    u = np.asarray(u_vals, dtype=np.float64)
    th = np.asarray(theta_vals, dtype=np.float64)
    if spec.lift_u is not None:
        u = u + spec.lift_u(z, t)
    if spec.lift_theta is not None:
        th = th + spec.lift_theta(z, t)
    return u, np.asarray(v_vals, dtype=np.float64), th


# ----------------------------------------------------------------------
# Manufactured benchmark
# ----------------------------------------------------------------------

def _sin_profile(z):
    return np.sin(2.0 * np.pi * z)


def _poly_profile(z):
    return z * z - z


def _one_profile(z):
    return np.ones_like(np.asarray(z, dtype=np.float64))


def example1_problem(gamma: float, beta: float) -> ProblemSpec:
    """Manufactured coupled system on [0,1] x [0,1] with unit coefficients.

    Exact solutions: u = t^3 sin(2 pi z), v = t^2 (z^2 - z),
    theta = t^2 sin(2 pi z).  The forcings are the exact images of these
    fields under the governing operators (fractional derivatives of pure
    powers evaluated analytically); the temperature forcing is stored in
    the integrated form D^(-beta) p used by the transformed equation.
    """
    coeffs = ProblemCoefficients(a1=1.0, a2=1.0, a3=1.0, a4=1.0, a5=1.0,
                                 b1=1.0, b2=1.0, b3=1.0, b4=1.0,
                                 gamma=gamma, beta=beta)
    g4 = gamma_fn(4.0 - gamma)
    g3 = gamma_fn(3.0 - gamma)
    pi2 = np.pi ** 2
    # u_t + D^g u - D^g u_zz - u_zz + u - v - theta
    f = SeparableForcing((
        ForcingTerm(3.0, 2.0, _sin_profile),                     # u_t
        ForcingTerm(6.0 / g4, 3.0 - gamma, _sin_profile),        # D^g u
        ForcingTerm(24.0 * pi2 / g4, 3.0 - gamma, _sin_profile),  # -D^g u_zz
        ForcingTerm(4.0 * pi2, 3.0, _sin_profile),               # -u_zz
        ForcingTerm(1.0, 3.0, _sin_profile),                     # +u
        ForcingTerm(-1.0, 2.0, _poly_profile),                   # -v
        ForcingTerm(-1.0, 2.0, _sin_profile),                    # -theta
    ))
    # v_t + D^g v - D^g v_zz - v_zz + v + u
    g = SeparableForcing((
        ForcingTerm(2.0, 1.0, _poly_profile),                    # v_t
        ForcingTerm(2.0 / g3, 2.0 - gamma, _poly_profile),       # D^g v
        ForcingTerm(-4.0 / g3, 2.0 - gamma, _one_profile),       # -D^g v_zz
        ForcingTerm(-2.0, 2.0, _one_profile),                    # -v_zz
        ForcingTerm(1.0, 2.0, _poly_profile),                    # +v
        ForcingTerm(1.0, 3.0, _sin_profile),                     # +u
    ))
    # relaxation-form temperature forcing, then integrated by beta
    p = SeparableForcing((
        ForcingTerm(2.0, 1.0, _sin_profile),                              # theta_t
        ForcingTerm(2.0 / gamma_fn(2.0 - beta), 1.0 - beta, _sin_profile),  # D^b theta_t
        ForcingTerm(4.0 * pi2, 2.0, _sin_profile),                        # -theta_zz
        ForcingTerm(-1.0, 2.0, _sin_profile),                             # -theta
        ForcingTerm(-2.0 / gamma_fn(3.0 - beta), 2.0 - beta, _sin_profile),  # -D^b theta
    ))
    return ProblemSpec(
        name="example1", coefficients=coeffs, length=1.0, t_final=1.0,
        forcing_f=f, forcing_g=g, forcing_p_tilde=p.fractional_integral(beta),
        exact_u=lambda z, t: t ** 3 * np.sin(2.0 * np.pi * z),
        exact_v=lambda z, t: t ** 2 * (np.asarray(z) ** 2 - np.asarray(z)),
        exact_theta=lambda z, t: t ** 2 * np.sin(2.0 * np.pi * z),
    )


# ----------------------------------------------------------------------
# Physical problem
# ----------------------------------------------------------------------

def physical_coefficients(params: PhysicalParams) -> ProblemCoefficients:
    """Map the dimensionless groups onto the transformed-system coefficients."""
    denom = 1.0 + params.m ** 2
    return ProblemCoefficients(
        a1=params.alpha / params.K_perm,
        a2=params.alpha,
        a3=params.M ** 2 / denom + 1.0 / params.K_perm,
        a4=params.M ** 2 * params.m / denom,
        a5=params.Gr,
        b1=1.0 / params.lam,
        b2=(1.0 + params.R) / (params.Pr * params.lam),
        b3=params.H / (params.Pr * params.lam),
        b4=params.H / params.Pr,
        gamma=params.gamma,
        beta=params.beta,
    )


def _wall_profile(length: float):
    def profile(z):
        return 1.0 - np.asarray(z, dtype=np.float64) / length
    return profile


def example2_problem(params: PhysicalParams | None = None) -> ProblemSpec:
    """Wall-driven MHD flow and heat transfer on [0, L], homogenized.

    Lifting ``u = w + t^3 (1-z/L)`` and ``theta = theta~ + t^2 (1-z/L)``
    moves the wall data into forcing terms.  Each forcing term below is
    the negative of one operator applied to the lifting (the lifting is
    affine in z, so no diffusion terms appear):

        f: -d/dt, -(M^2/(1+m^2)), -(1/K), -(alpha/K) D^g, +Gr coupling
        g: -(M^2 m/(1+m^2)) cross coupling
        p: -d/dt, -lambda D^b d/dt, +(H/Pr), +(lambda H/Pr) D^b

    Temperature forcing is stored as ``(1/lambda) D^(-beta) p`` to match
    the integrated equation actually discretized.  The wall temperature
    datum t^2 only holds until t = 1, so runs beyond that are rejected.
    """
    if params is None:
        params = PhysicalParams()
    coeffs = physical_coefficients(params)
    wall = _wall_profile(params.length)
    m2 = params.M ** 2 / (1.0 + params.m ** 2)
    f = SeparableForcing((
        ForcingTerm(-3.0, 2.0, wall),
        ForcingTerm(-6.0 * params.alpha / (params.K_perm * gamma_fn(4.0 - params.gamma)),
                    3.0 - params.gamma, wall),
        ForcingTerm(-m2, 3.0, wall),
        ForcingTerm(-1.0 / params.K_perm, 3.0, wall),
        ForcingTerm(params.Gr, 2.0, wall),
    ))
    g = SeparableForcing((
        ForcingTerm(-m2 * params.m, 3.0, wall),
    ))
    hp = params.H / params.Pr
    p = SeparableForcing((
        ForcingTerm(-2.0, 1.0, wall),
        ForcingTerm(-2.0 * params.lam / gamma_fn(2.0 - params.beta),
                    1.0 - params.beta, wall),
        ForcingTerm(hp, 2.0, wall),
        ForcingTerm(2.0 * params.lam * hp / gamma_fn(3.0 - params.beta),
                    2.0 - params.beta, wall),
    ))
    return ProblemSpec(
        name="example2", coefficients=coeffs,
        length=params.length, t_final=params.t_final,
        forcing_f=f, forcing_g=g,
        forcing_p_tilde=p.fractional_integral(params.beta).scaled(1.0 / params.lam),
        lift_u=lambda z, t: t ** 3 * (1.0 - np.asarray(z) / params.length),
        lift_theta=lambda z, t: t ** 2 * (1.0 - np.asarray(z) / params.length),
        max_t_final=1.0,
    )
