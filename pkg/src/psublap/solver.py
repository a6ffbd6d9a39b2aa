"""Explicit method-of-lines solver for the p-sub-Laplacian heat problem

    u_t = L_p u + alpha sum_i |u|^(q_i-1) u + beta sum_j |grad_H u|^(r_j)
                + gamma sum_k |u|^(s_k-1) u

with zero Dirichlet data on the faces of a box.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import (
    GroupSpec,
    Grid,
    apply_dirichlet,
    horizontal_divergence,
    horizontal_gradient,
)

log = logging.getLogger(__name__)


class ProblemError(ValueError):
    """ProblemSpec or SolverConfig invariant violated."""


@dataclass
class ProblemSpec:
    group: GroupSpec
    grid: Grid
    u0: np.ndarray
    p: float = 2.0
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    q_list: Sequence[float] = ()
    r_list: Sequence[float] = ()
    s_list: Sequence[float] = ()

    def __post_init__(self):
        self.q_list = tuple(float(v) for v in self.q_list)
        self.r_list = tuple(float(v) for v in self.r_list)
        self.s_list = tuple(float(v) for v in self.s_list)
        self.u0 = np.asarray(self.u0, dtype=float)

    def validate(self) -> None:
        """Raise ProblemError when an invariant of the problem data fails."""
        if not self.p > 1:
            raise ProblemError(f"p must exceed 1, got {self.p}")
        if self.grid.ndim != self.group.N:
            raise ProblemError(f"grid dimension {self.grid.ndim} != group dimension {self.group.N}")
        for name, coef, exps in (
            ("q", self.alpha, self.q_list),
            ("r", self.beta, self.r_list),
            ("s", self.gamma, self.s_list),
        ):
            if coef != 0 and not exps:
                raise ProblemError(f"{name}_list is empty but its coefficient is {coef}")
            if any(e <= 0 for e in exps):
                raise ProblemError(f"{name}_list entries must be positive, got {exps}")
            if coef > 0:
                lower = 1.0
                if name == "r":
                    if any(e <= lower for e in exps):
                        raise ProblemError(f"r_j must exceed 1 when beta > 0, got {exps}")
                elif any(e < lower for e in exps):
                    raise ProblemError(f"{name}_i must be >= 1 when its coefficient is positive, got {exps}")
        if self.u0.shape != self.grid.extents:
            raise ProblemError(f"u0 shape {self.u0.shape} does not match grid {self.grid.extents}")
        if not np.all(np.isfinite(self.u0)):
            raise ProblemError("u0 has non-finite values")
        if self.u0.min() < 0:
            raise ProblemError(f"u0 must be nonnegative (min {self.u0.min():g})")
        if np.any(self.u0[self.grid.boundary_mask()] != 0):
            raise ProblemError("u0 must vanish on the boundary")


@dataclass
class SolverConfig:
    eps_reg: float = 1e-8
    cfl: float = 0.9
    u_max: float = 1e6
    min_dt: float = 1e-12
    t_end: float = 1.0
    trace_stride: int = 1
    max_steps: int = 10_000_000

    def validate(self) -> None:
        for name in ("eps_reg", "cfl", "u_max", "min_dt", "t_end", "trace_stride", "max_steps"):
            if not getattr(self, name) > 0:
                raise ProblemError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.cfl < 1:
            raise ProblemError(f"cfl safety factor must be below 1, got {self.cfl}")


class Outcome(str, enum.Enum):
    COMPLETED = "completed"
    BLOWUP = "blowup"
    UNSTABLE = "unstable"


@dataclass
class SolveTrace:
    times: list[float] = field(default_factory=list)
    sup_norm: list[float] = field(default_factory=list)
    energy: list[float] = field(default_factory=list)
    dt: list[float] = field(default_factory=list)
    fields: list[np.ndarray] = field(default_factory=list)
    outcome: Outcome = Outcome.COMPLETED
    blowup_time: float | None = None
    steps: int = 0
    dt_max: float = 0.0
    final: np.ndarray | None = field(default=None, repr=False)
    weights: np.ndarray | float = field(default=1.0, repr=False)

    def record(self, t, u, dt, kappa, keep_fields):
        self.times.append(float(t))
        self.sup_norm.append(float(np.max(np.abs(u))))
        self.energy.append(energy_y(np.clip(u, 0.0, None), kappa, self.weights) if kappa else math.nan)
        self.dt.append(float(dt))
        if keep_fields:
            self.fields.append(u.copy())

    def as_arrays(self) -> dict[str, np.ndarray]:
        return {
            "t": np.asarray(self.times),
            "sup_norm": np.asarray(self.sup_norm),
            "energy_y": np.asarray(self.energy),
            "dt": np.asarray(self.dt),
        }


def _flux_factor(g2: np.ndarray, p: float, eps_reg: float) -> np.ndarray:
    if p == 2:
        return np.ones_like(g2)
    base = g2 + eps_reg
    if p < 2:
        with np.errstate(divide="ignore"):
            out = np.where(base > 0, base ** ((p - 2) / 2), 0.0)
        return out
    return base ** ((p - 2) / 2)


def p_sublaplacian(group: GroupSpec, grid: Grid, u: np.ndarray, p: float, eps_reg: float = 1e-8,
                   grad: list[np.ndarray] | None = None) -> np.ndarray:
    """Regularised p-sub-Laplacian div_H((|grad_H u|^2 + eps_reg)^((p-2)/2) grad_H u).

    ``grad`` may be passed to reuse an already computed horizontal gradient.
    """
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    if eps_reg < 0:
        raise ValueError("eps_reg must be nonnegative")
    if grad is None:
        grad = horizontal_gradient(group, grid, u)
    g2 = sum(g * g for g in grad)
    k = _flux_factor(g2, p, eps_reg)
    return horizontal_divergence(group, grid, [k * g for g in grad])


def _odd_power(u: np.ndarray, e: float) -> np.ndarray:
    # |u|^(e-1) u, extended by 0 at u = 0
    a = np.abs(u)
    return np.sign(u) * a ** e


def reaction_rhs(problem: ProblemSpec, u: np.ndarray, grad: Sequence[np.ndarray]) -> np.ndarray:
    """Pointwise zeroth- and first-order source terms."""
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("non-finite values in u")
    out = np.zeros_like(u)
    if problem.alpha:
        out += problem.alpha * sum(_odd_power(u, q) for q in problem.q_list)
    if problem.beta:
        gnorm = np.sqrt(sum(g * g for g in grad))
        out += problem.beta * sum(gnorm ** r for r in problem.r_list)
    if problem.gamma:
        out += problem.gamma * sum(_odd_power(u, s) for s in problem.s_list)
    return out


def cfl_dt(problem: ProblemSpec, u: np.ndarray, config: SolverConfig,
           grad: list[np.ndarray] | None = None) -> float:
    """Adaptive explicit step c h^2 / (2 W D_max + h G_max + h^2 S_max).

    W is the group's horizontal weight (N1 for Euclidean space). The result is
    never below ``config.min_dt``; callers compare against it to detect stalls.
    """
    grid, p, h = problem.grid, problem.p, problem.grid.h
    if grad is None:
        grad = horizontal_gradient(problem.group, grid, u)
    g2 = sum(g * g for g in grad)
    factor = _flux_factor(g2, p, config.eps_reg)
    D = float(factor.max()) * (p - 1 if p > 2 else 1.0)
    G = 0.0
    if problem.beta:
        gnorm = np.sqrt(g2)
        G = abs(problem.beta) * sum(r * float((gnorm ** (r - 1)).max()) for r in problem.r_list)
    S = 0.0
    umax = float(np.max(np.abs(u)))
    if problem.alpha or problem.gamma:
        def lip(e):
            if e >= 1:
                return e * umax ** (e - 1)
            # sublinear terms: no finite Lipschitz bound near 0, use the node spacing scale
            return e * max(umax, h * h) ** (e - 1)
        S = abs(problem.alpha) * sum(lip(q) for q in problem.q_list) \
            + abs(problem.gamma) * sum(lip(s) for s in problem.s_list)
    W = problem.group.horizontal_weight(grid)
    denom = 2 * W * D + h * G + h * h * S
    if not math.isfinite(denom):
        return config.min_dt
    if denom <= 0:
        return config.t_end
    return max(config.cfl * h * h / denom, config.min_dt)


def step(problem: ProblemSpec, u: np.ndarray, dt: float, config: SolverConfig,
         grad: list[np.ndarray] | None = None) -> np.ndarray:
    """One forward Euler step; boundary nodes are reset to zero."""
    if dt == 0:
        return np.array(u, dtype=float, copy=True)
    if grad is None:
        grad = horizontal_gradient(problem.group, problem.grid, u)
    rhs = p_sublaplacian(problem.group, problem.grid, u, problem.p, config.eps_reg, grad=grad)
    rhs += reaction_rhs(problem, u, grad)
    return apply_dirichlet(problem.grid, u + dt * rhs)


def energy_y(u: np.ndarray, kappa: float, weights: np.ndarray | float = 1.0) -> float:
    """(1/(kappa+1)) * integral of u^(kappa+1), by a weighted node sum.

    ``weights`` are the quadrature weights (see ``Grid.quadrature_weights``).
    """
    u = np.asarray(u, dtype=float)
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if u.size and u.min() < 0:
        raise ValueError(f"energy_y needs a nonnegative field (min {u.min():g})")
    return float(np.sum(weights * u ** (kappa + 1)) / (kappa + 1))


def solve(problem: ProblemSpec, config: SolverConfig, kappa: float | None = None,
          keep_fields: bool = False) -> SolveTrace:
    """Integrate from ``problem.u0`` to ``config.t_end`` or until blow-up.

    The trace is sampled every ``trace_stride`` steps and always at the
    first and final states.  Blow-up is declared when the sup-norm reaches
    ``u_max`` (the crossing time is the blow-up estimate) or when the step
    size stalls at ``min_dt`` while the sup-norm keeps growing.
    """
    problem.validate()
    config.validate()
    grid = problem.grid
    trace = SolveTrace(weights=grid.quadrature_weights())
    u = apply_dirichlet(grid, problem.u0.copy())
    t = 0.0
    trace.record(t, u, 0.0, kappa, keep_fields)
    n = 0
    prev_sup = float(np.max(np.abs(u)))
    with np.errstate(over="ignore", invalid="ignore"):
        while t < config.t_end:
            if n >= config.max_steps:
                log.warning("max_steps reached at t=%g", t)
                trace.outcome = Outcome.UNSTABLE
                break
            grad = horizontal_gradient(problem.group, grid, u)
            dt = cfl_dt(problem, u, config, grad)
            stalled = dt <= config.min_dt
            dt = min(dt, config.t_end - t)
            try:
                u = step(problem, u, dt, config, grad)
            except FloatingPointError:
                trace.outcome = Outcome.UNSTABLE
                break
            t += dt
            n += 1
            trace.dt_max = max(trace.dt_max, dt)
            sup = float(np.max(np.abs(u)))
            if not math.isfinite(sup):
                trace.outcome = Outcome.UNSTABLE
                break
            done = sup >= config.u_max or (stalled and sup > prev_sup) or t >= config.t_end
            if n % config.trace_stride == 0 or done:
                trace.record(t, u, dt, kappa, keep_fields)
            if sup >= config.u_max or (stalled and sup > prev_sup):
                trace.outcome = Outcome.BLOWUP
                trace.blowup_time = t
                break
            if stalled:
                trace.outcome = Outcome.UNSTABLE
                break
            prev_sup = sup
    trace.steps = n
    trace.final = u
    log.debug("solve finished: %s after %d steps at t=%g", trace.outcome.value, n, t)
    return trace
