"""Time marching for the transformed coupled flow/heat system.

The scheme is BDF1 on the first step and BDF2 afterwards, with FBDF2
convolution quadrature for every fractional operator:

    u:  du/dt + a1 D^g u - a2 D^g u_zz - u_zz + a3 u - a4 v - a5 th = f
    v:  dv/dt + a1 D^g v - a2 D^g v_zz - v_zz + a3 v + a4 u        = g
    th: dth/dt + b1 D^(1-b) th - b2 D^(-b) th_zz - b3 D^(-b) th - b4 th = p~

Each step solves the temperature system first (it does not depend on the
velocities), then the coupled velocity block as one complex banded system

    (A + i a4 S)(U + iV) = (F + a5 S TH) + i G,

whose real/imaginary parts reproduce the two real equations.  History
sums are evaluated either directly (all past coefficient vectors kept,
O(K) work per step) or with the fast sum-of-poles recurrences (ring
buffer of the last k0+2 vectors plus one accumulator bank per
field/operator, O(Q) work per step).

Accumulator banks store raw coefficient vectors; mass and stiffness
matrices are applied after accumulation, so one bank serves both the
(u, phi) and (grad u, grad phi) history sums of a field.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded
from scipy.sparse import diags
from scipy.sparse.linalg import splu

from .fbdf import DEFAULT_CUTOFF, DEFAULT_EPS, ContourNodes, WeightTable, contour_nodes, fbdf_weights
from .spectral import SpectralSpace, build_space, l2_error, project_forcing, project_profile

__all__ = [
    "ProblemCoefficients",
    "SolverConfig",
    "StepMatrices",
    "SolverState",
    "Solution",
    "FactorizationError",
    "make_step_matrices",
    "make_state",
    "assemble_rhs_direct",
    "assemble_rhs_fast",
    "update_accumulators",
    "step",
    "run",
]


class FactorizationError(RuntimeError):
    """A step matrix is not positive definite for the given coefficients."""


@dataclass(frozen=True)
class ProblemCoefficients:
    """Coefficients of the transformed coupled system plus the two orders."""

    a1: float
    a2: float
    a3: float
    a4: float
    a5: float
    b1: float
    b2: float
    b3: float
    b4: float
    gamma: float
    beta: float

    def __post_init__(self):
        for name in ("a1", "a2", "a3", "a4", "a5", "b1", "b2", "b3", "b4"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"coefficient {name} must be finite")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")


@dataclass(frozen=True)
class SolverConfig:
    """Discretization and history-evaluation settings for one run.

    ``steps * tau`` is the final time.  ``mode`` selects direct or fast
    history evaluation; with ``steps <= k0`` the fast mode degenerates to
    the direct scheme (every history term is inside the exact local
    window), which is relied on by the diff harness.
    """

    tau: float
    steps: int
    degree: int
    mode: str = "direct"
    eps: float = DEFAULT_EPS
    k0: int = DEFAULT_CUTOFF
    length: float | None = None
    trajectory_every: int | None = None
    grid_points: int = 101

    def __post_init__(self):
        if self.tau <= 0.0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.steps < 1:
            raise ValueError(f"steps must be positive, got {self.steps}")
        if self.mode not in ("direct", "fast"):
            raise ValueError(f"mode must be 'direct' or 'fast', got {self.mode!r}")
        if self.k0 < 1:
            raise ValueError(f"k0 must be at least 1, got {self.k0}")
        if self.tau * self.steps > 1.0 + 1e-12:
            warnings.warn(
                f"final time {self.tau * self.steps:g} exceeds the analysis window T <= 1",
                stacklevel=3)


@dataclass
class StepMatrices:
    """Assembled and factored left-hand sides for k = 1 and k >= 2."""

    varpi_first: float
    varpi_later: float
    varrho_first: float
    varrho_later: float
    uv_stiff_coef: float   # a2 w0^(g) / tau^g + 1
    th_stiff_coef: float   # b2 tau^b w0^(-b)
    theta_chol_first: np.ndarray
    theta_chol_later: np.ndarray
    uv_lu_first: object
    uv_lu_later: object


def _theta_band(space: SpectralSpace, kappa: float, cstiff: float) -> np.ndarray:
    ab = np.zeros((3, space.dim))
    ab[0, 2:] = kappa * space.mass_off
    ab[2, :] = kappa * space.mass_main + cstiff * space.stiff_diag
    return ab


def _uv_operator(space: SpectralSpace, kappa: float, cstiff: float, a4: float):
    off = (kappa + 1j * a4) * space.mass_off
    main = (kappa + 1j * a4) * space.mass_main + cstiff * space.stiff_diag
    return splu(diags([off, main, off], [-2, 0, 2], format="csc"))


def make_step_matrices(space: SpectralSpace, coeffs: ProblemCoefficients,
                       config: SolverConfig,
                       weights: dict[str, WeightTable]) -> StepMatrices:
    """Build and factor the k=1 and k>=2 left-hand sides once per run.

    Raises :class:`FactorizationError` if a temperature or velocity matrix
    is not positive definite (possible for pathological b3, b4 or a3).
    """
    tau = config.tau
    c = coeffs
    wg0 = weights["gamma"].weights[0]
    w1b0 = weights["one_minus_beta"].weights[0]
    wmb0 = weights["minus_beta"].weights[0]
    varpi_first = 1.0 / tau + c.a1 * wg0 / tau ** c.gamma + c.a3
    varpi_later = 1.5 / tau + c.a1 * wg0 / tau ** c.gamma + c.a3
    varrho_first = (1.0 / tau + c.b1 * w1b0 / tau ** (1.0 - c.beta)
                    - c.b3 * tau ** c.beta * wmb0 - c.b4)
    varrho_later = (1.5 / tau + c.b1 * w1b0 / tau ** (1.0 - c.beta)
                    - c.b3 * tau ** c.beta * wmb0 - c.b4)
    uv_stiff = c.a2 * wg0 / tau ** c.gamma + 1.0
    th_stiff = c.b2 * tau ** c.beta * wmb0

    factors = {}
    for tag, kappa, cstiff in (
            ("theta(k=1)", varrho_first, th_stiff),
            ("theta(k>=2)", varrho_later, th_stiff),
            ("velocity(k=1)", varpi_first, uv_stiff),
            ("velocity(k>=2)", varpi_later, uv_stiff)):
        try:
            factors[tag] = cholesky_banded(_theta_band(space, kappa, cstiff), lower=False)
        except LinAlgError as exc:
            raise FactorizationError(
                f"{tag} system is not positive definite "
                f"(kappa={kappa:g}, stiffness coefficient={cstiff:g}; "
                f"a3={c.a3:g}, b3={c.b3:g}, b4={c.b4:g}, tau={tau:g})") from exc

    return StepMatrices(
        varpi_first=varpi_first, varpi_later=varpi_later,
        varrho_first=varrho_first, varrho_later=varrho_later,
        uv_stiff_coef=uv_stiff, th_stiff_coef=th_stiff,
        theta_chol_first=factors["theta(k=1)"],
        theta_chol_later=factors["theta(k>=2)"],
        uv_lu_first=_uv_operator(space, varpi_first, uv_stiff, c.a4),
        uv_lu_later=_uv_operator(space, varpi_later, uv_stiff, c.a4),
    )


def _prepare_forcing(space: SpectralSpace, forcing) -> Callable[[float], np.ndarray]:
    """Per-step forcing projection; separable forcings cache their profile
    projections once and only rescale time powers afterwards."""
    if forcing is None:
        zero = np.zeros(space.dim)
        return lambda t: zero
    terms = getattr(forcing, "terms", None)
    if terms is not None:
        profiles = np.array([project_profile(space, term.profile(space.rule.points))
                             for term in terms])
        coefs = np.array([term.coefficient for term in terms])
        mus = np.array([term.exponent for term in terms])
        return lambda t: (coefs * np.power(t, mus)) @ profiles
    return lambda t: project_forcing(space, forcing, t)


class SolverState:
    """Mutable per-run state: histories, accumulators, factorizations."""

    def __init__(self, problem, config: SolverConfig, space: SpectralSpace,
                 weights: dict[str, WeightTable],
                 nodes: dict[str, ContourNodes] | None,
                 matrices: StepMatrices):
        self.problem = problem
        self.config = config
        self.space = space
        self.weights = weights
        self.nodes = nodes
        self.matrices = matrices
        self.step_index = 0
        c = problem.coefficients
        tau = config.tau
        K = config.steps
        dim = space.dim
        self.tau = tau
        self.dim = dim

        # scheme constants reused every step
        self.cg1 = c.a1 / tau ** c.gamma
        self.cg2 = c.a2 / tau ** c.gamma
        self.c1b = c.b1 / tau ** (1.0 - c.beta)
        self.cmb2 = c.b2 * tau ** c.beta
        self.cmb3 = c.b3 * tau ** c.beta

        self.forcing_f = _prepare_forcing(space, problem.forcing_f)
        self.forcing_g = _prepare_forcing(space, problem.forcing_g)
        self.forcing_p = _prepare_forcing(space, problem.forcing_p_tilde)

        wg = weights["gamma"].weights
        w1b = weights["one_minus_beta"].weights
        wmb = weights["minus_beta"].weights
        self.w_gamma = wg
        self.fast_active = config.mode == "fast" and K > config.k0

        if config.mode == "direct" or not self.fast_active:
            # full history; u and v interleave into one array so their
            # shared-order history reduction is a single matrix product
            self.hist_uv = np.zeros((K + 1, 2 * dim))
            self.hist_th = np.zeros((K + 1, dim))
            self.wrev_g = np.ascontiguousarray(wg[::-1])
            self.wrev_th = np.ascontiguousarray(np.vstack([w1b[::-1], wmb[::-1]]))
            self.peak_history_vectors = 3 * (K + 1)
        else:
            k0 = config.k0
            cap = k0 + 2  # local window plus the two BDF2 back values
            self.ring_cap = cap
            self.ring_uv = np.zeros((cap, 2 * dim))
            self.ring_th = np.zeros((cap, dim))
            # [w_k0, ..., w_1] so trailing slices give shorter windows
            self.wloc_g = np.ascontiguousarray(wg[1:k0 + 1][::-1])
            self.wloc_th = np.ascontiguousarray(
                np.vstack([w1b[1:k0 + 1][::-1], wmb[1:k0 + 1][::-1]]))
            q_uv = nodes["gamma"]
            q1 = nodes["one_minus_beta"]
            q2 = nodes["minus_beta"]
            self.bank_uv = np.zeros((q_uv.count, 2 * dim))
            self.bank_th1 = np.zeros((q1.count, dim))
            self.bank_th2 = np.zeros((q2.count, dim))
            self.bank_n = 0
            self.inv_uv = 1.0 / (1.0 + q_uv.poles * tau)
            self.inv_th1 = 1.0 / (1.0 + q1.poles * tau)
            self.inv_th2 = 1.0 / (1.0 + q2.poles * tau)
            # tau^order * h_i * (1+sigma_i tau)^(-k0-1): multiplying the
            # accumulator gives the history sum already scaled to combine
            # with the exact local part before the 1/tau^order factor
            self.pole_uv = (tau ** c.gamma * q_uv.weights_h
                            * self.inv_uv ** (k0 + 1))
            self.pole_th1 = (tau ** (1.0 - c.beta) * q1.weights_h
                             * self.inv_th1 ** (k0 + 1))
            self.pole_th2 = (tau ** (-c.beta) * q2.weights_h
                             * self.inv_th2 ** (k0 + 1))
            self.peak_history_vectors = (3 * cap + 2 * q_uv.count
                                         + q1.count + q2.count)
        self.trajectory: list[tuple[int, float, np.ndarray, np.ndarray, np.ndarray]] = []

    # -- history access ------------------------------------------------

    def _ring_rows(self, lo: int, hi: int) -> np.ndarray:
        return np.arange(lo, hi) % self.ring_cap

    def vecs_at(self, j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(u, v, theta) coefficient vectors of completed step j."""
        if j > self.step_index:
            raise RuntimeError(f"step {j} has not been computed yet")
        if self.fast_active:
            if j < self.step_index - self.ring_cap + 1:
                raise RuntimeError(f"step {j} evicted from the fast-mode ring")
            row = j % self.ring_cap
            uv = self.ring_uv[row]
            return uv[:self.dim], uv[self.dim:], self.ring_th[row]
        uv = self.hist_uv[j]
        return uv[:self.dim], uv[self.dim:], self.hist_th[j]

    def _store(self, k: int, u: np.ndarray, v: np.ndarray, th: np.ndarray) -> None:
        if self.fast_active:
            row = k % self.ring_cap
            self.ring_uv[row, :self.dim] = u
            self.ring_uv[row, self.dim:] = v
            self.ring_th[row] = th
        else:
            self.hist_uv[k, :self.dim] = u
            self.hist_uv[k, self.dim:] = v
            self.hist_th[k] = th

    def set_history(self, j: int, u: np.ndarray, v: np.ndarray, th: np.ndarray) -> None:
        """Seed a history entry directly (testing hook)."""
        self._store(j, u, v, th)
        self.step_index = max(self.step_index, j)


def _history_nodes(coeffs: ProblemCoefficients, config: SolverConfig):
    orders = {"gamma": coeffs.gamma,
              "one_minus_beta": 1.0 - coeffs.beta,
              "minus_beta": -coeffs.beta}
    return {name: contour_nodes(order, config.tau, config.steps,
                                k0=config.k0, eps=config.eps)
            for name, order in orders.items()}


def make_state(problem, config: SolverConfig) -> SolverState:
    """Build space, weight tables, pole calibrations and factorizations."""
    length = config.length if config.length is not None else problem.length
    if abs(length - problem.length) > 1e-12:
        raise ValueError(
            f"config length {length} disagrees with problem length {problem.length}")
    space = build_space(config.degree, length)
    c = problem.coefficients
    weights = {"gamma": fbdf_weights(c.gamma, config.steps),
               "one_minus_beta": fbdf_weights(1.0 - c.beta, config.steps),
               "minus_beta": fbdf_weights(-c.beta, config.steps)}
    nodes = None
    if config.mode == "fast" and config.steps > config.k0:
        nodes = _history_nodes(c, config)
    matrices = make_step_matrices(space, c, config, weights)
    return SolverState(problem, config, space, weights, nodes, matrices)


# ----------------------------------------------------------------------
# Right-hand sides
# ----------------------------------------------------------------------

def _compose_rhs(state: SolverState, k: int,
                 s_u: np.ndarray, s_v: np.ndarray,
                 s_th1: np.ndarray, s_th2: np.ndarray):
    """Combine BDF terms, scaled history sums and forcing projections.

    ``s_*`` are the raw weighted history sums ``sum_j w_{k-j} c^j`` over
    j = 0..k-1 (exact, or exact-local plus pole contribution in fast
    mode); matrices are applied here, once.
    """
    space = state.space
    tau = state.tau
    t = k * tau
    if k == 1:
        u1, v1, th1 = state.vecs_at(0)
        bu = u1 / tau
        bv = v1 / tau
        bt = th1 / tau
    else:
        u1, v1, th1 = state.vecs_at(k - 1)
        u2, v2, th2 = state.vecs_at(k - 2)
        bu = 2.0 / tau * u1 - 0.5 / tau * u2
        bv = 2.0 / tau * v1 - 0.5 / tau * v2
        bt = 2.0 / tau * th1 - 0.5 / tau * th2
    F = (space.apply_mass(bu - state.cg1 * s_u)
         - state.cg2 * space.apply_stiffness(s_u) + state.forcing_f(t))
    G = (space.apply_mass(bv - state.cg1 * s_v)
         - state.cg2 * space.apply_stiffness(s_v) + state.forcing_g(t))
    P = (space.apply_mass(bt - state.c1b * s_th1 + state.cmb3 * s_th2)
         - state.cmb2 * space.apply_stiffness(s_th2) + state.forcing_p(t))
    return F, G, P


def assemble_rhs_direct(state: SolverState, k: int):
    """Right-hand sides with exact history sums over all past steps."""
    if state.step_index < k - 1:
        raise RuntimeError(
            f"history through step {k - 1} required, have {state.step_index}")
    dim = state.dim
    if state.fast_active:
        # only valid while the ring still holds the complete history
        if k > state.config.k0 + 1:
            raise RuntimeError(
                "direct assembly past the ring capacity in fast mode")
        rows = state._ring_rows(0, k)
        hist_uv = state.ring_uv[rows]
        hist_th = state.ring_th[rows]
        w = state.w_gamma[k:0:-1]
        s_uv = w @ hist_uv
        w1b = state.weights["one_minus_beta"].weights[k:0:-1]
        wmb = state.weights["minus_beta"].weights[k:0:-1]
        s1 = w1b @ hist_th
        s2 = wmb @ hist_th
    else:
        K = state.config.steps
        s_uv = state.wrev_g[K - k:K] @ state.hist_uv[:k]
        s_th = state.wrev_th[:, K - k:K] @ state.hist_th[:k]
        s1, s2 = s_th[0], s_th[1]
    return _compose_rhs(state, k, s_uv[:dim], s_uv[dim:], s1, s2)


def assemble_rhs_fast(state: SolverState, k: int):
    """Right-hand sides with the exact local window plus pole history.

    The local part covers j in [k-k0, k-1] with exact weights; everything
    older enters through the per-pole accumulators, which must be current
    (``q_{k-k0}``, i.e. updated through coefficient vector k-k0-1).
    """
    k0 = state.config.k0
    if k <= k0:
        raise RuntimeError(
            f"fast assembly requires k > k0={k0}; use direct assembly for k={k}")
    if not state.fast_active:
        raise RuntimeError("state was not built for fast history evaluation")
    if state.bank_n != k - k0:
        raise RuntimeError(
            f"accumulators hold q_{state.bank_n}, step {k} needs q_{k - k0}")
    dim = state.dim
    rows = state._ring_rows(k - k0, k)
    s_uv = state.wloc_g @ state.ring_uv[rows]
    s_th = state.wloc_th @ state.ring_th[rows]
    s_uv = s_uv + state.pole_uv @ state.bank_uv
    s1 = s_th[0] + state.pole_th1 @ state.bank_th1
    s2 = s_th[1] + state.pole_th2 @ state.bank_th2
    return _compose_rhs(state, k, s_uv[:dim], s_uv[dim:], s1, s2)


def update_accumulators(state: SolverState, vectors) -> None:
    """Advance every pole bank by one step with the given (u, v, theta).

    Applies ``q_n = (q_{n-1} + tau * c^{n-1}) / (1 + sigma_i tau)`` per
    pole; the caller passes ``c^{n-1}``.  Calling twice without completing
    a step in between is a state error.
    """
    if not state.fast_active:
        raise RuntimeError("accumulators exist only in fast mode")
    if getattr(state, "_last_bank_step", None) == state.step_index:
        raise RuntimeError(
            f"accumulators already updated for step {state.step_index}")
    u, v, th = vectors
    tau = state.tau
    state.bank_uv[:, :state.dim] += tau * u
    state.bank_uv[:, state.dim:] += tau * v
    state.bank_uv *= state.inv_uv[:, None]
    state.bank_th1 += tau * th
    state.bank_th1 *= state.inv_th1[:, None]
    state.bank_th2 += tau * th
    state.bank_th2 *= state.inv_th2[:, None]
    state.bank_n += 1
    state._last_bank_step = state.step_index


# ----------------------------------------------------------------------
# Stepping
# ----------------------------------------------------------------------

def step(state: SolverState, k: int) -> SolverState:
    """Advance the state from step k-1 to step k."""
    if k != state.step_index + 1:
        raise RuntimeError(f"state is at step {state.step_index}, cannot jump to {k}")
    if state.fast_active and k > state.config.k0:
        F, G, P = assemble_rhs_fast(state, k)
    else:
        F, G, P = assemble_rhs_direct(state, k)
    m = state.matrices
    chol = m.theta_chol_first if k == 1 else m.theta_chol_later
    th = cho_solve_banded((chol, False), P)
    rhs = (F + state.problem.coefficients.a5 * state.space.apply_mass(th)) + 1j * G
    lu = m.uv_lu_first if k == 1 else m.uv_lu_later
    x = lu.solve(rhs)
    u = np.ascontiguousarray(x.real)
    v = np.ascontiguousarray(x.imag)
    state._store(k, u, v, th)
    state.step_index = k
    if state.fast_active and k >= state.config.k0:
        uj, vj, thj = state.vecs_at(k - state.config.k0)
        update_accumulators(state, (uj, vj, thj))
    cfg = state.config
    if cfg.trajectory_every and (k % cfg.trajectory_every == 0 or k == cfg.steps):
        state.trajectory.append((k, k * state.tau, u.copy(), v.copy(), th.copy()))
    return state


@dataclass
class Solution:
    """Result of one run: final coefficients, errors, timings, diagnostics."""

    u: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    space: SpectralSpace
    config: SolverConfig
    errors: dict | None
    setup_seconds: float
    loop_seconds: float
    peak_history_vectors: int
    fast_diagnostics: dict
    trajectory: list = field(default_factory=list)

    @property
    def total_error(self) -> float | None:
        return None if self.errors is None else self.errors["total"]


def run(problem, config: SolverConfig) -> Solution:
    """March the problem to its final time and measure errors if exact
    solutions are available.  Deterministic for identical inputs; the time
    loop is timed separately from setup."""
    t0 = time.perf_counter()
    state = make_state(problem, config)
    t1 = time.perf_counter()
    for k in range(1, config.steps + 1):
        step(state, k)
    t2 = time.perf_counter()

    u, v, th = state.vecs_at(config.steps)
    errors = None
    if problem.exact_u is not None:
        t_final = config.steps * config.tau
        eu = l2_error(state.space, u, lambda z: problem.exact_u(z, t_final))
        ev = l2_error(state.space, v, lambda z: problem.exact_v(z, t_final))
        et = l2_error(state.space, th, lambda z: problem.exact_theta(z, t_final))
        errors = {"u": eu, "v": ev, "theta": et, "total": eu + ev + et}
    diag = {}
    if state.nodes is not None:
        diag = {name: {"Q": n.count, "achieved_eps": n.achieved_eps}
                for name, n in state.nodes.items()}
    return Solution(u=u.copy(), v=v.copy(), theta=th.copy(), space=state.space,
                    config=config, errors=errors,
                    setup_seconds=t1 - t0, loop_seconds=t2 - t1,
                    peak_history_vectors=state.peak_history_vectors,
                    fast_diagnostics=diag, trajectory=state.trajectory)
