"""Experiment scenarios: boundedness, blow-up, energy growth and ordering checks."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from . import barriers as bar
from .geometry import GroupSpec, Grid, apply_dirichlet, first_stratum_radius, parse_group
from .solver import (
    Outcome,
    ProblemError,
    ProblemSpec,
    SolverConfig,
    SolveTrace,
    cfl_dt,
    horizontal_gradient,
    solve,
    step,
)

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Algebraic inequality behind the comparison argument


def _signed_power(x: np.ndarray, e: float) -> np.ndarray:
    """|x|^e x along the last axis, extended by 0 at x = 0."""
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norm > 0, norm ** e, 0.0)
    return scale * x


def lemma_gap(a, b, sigma):
    """Both sides of

        <|a|^(s-2) a - |b|^(s-2) b, a - b>  >=  (4/s^2) | |a|^((s-2)/2) a - |b|^((s-2)/2) b |^2.

    Works on stacked vectors (last axis) with ``sigma`` broadcast over the
    leading axes.  Returns ``(lhs, rhs)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 1):
        raise ValueError("sigma must exceed 1")
    s = sigma[..., None] if sigma.ndim else sigma
    lhs = np.sum((_signed_power(a, s - 2) - _signed_power(b, s - 2)) * (a - b), axis=-1)
    diff = _signed_power(a, (s - 2) / 2) - _signed_power(b, (s - 2) / 2)
    rhs = 4 / sigma ** 2 * np.sum(diff * diff, axis=-1)
    if lhs.ndim == 0:
        return float(lhs), float(rhs)
    return lhs, rhs


@dataclass
class LemmaSweep:
    samples: int
    seed: int
    min_gap: float
    worst: dict
    equality_max_rel_error: float
    seconds: float
    passed: bool


def lemma_sweep(samples: int = 10_000, seed: int = 0, slack: float = 1e-12, sigma_low: float = 1.0) -> LemmaSweep:
    """Randomised check over sigma in (sigma_low, 10], dimensions 1-4, entries in [-10, 10].

    With the constant 4/sigma^2 the inequality fails for sigma < 2 (take
    a = -b in one dimension: the ratio lhs/rhs is sigma - 1), so the
    default range reports a negative gap.
    """
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    min_gap, worst, eq_err = math.inf, {}, 0.0
    for dim, n in zip(range(1, 5), np.array_split(np.arange(samples), 4)):
        n = len(n)
        a = rng.uniform(-10, 10, (n, dim))
        b = rng.uniform(-10, 10, (n, dim))
        sigma = 10 - (10 - sigma_low) * rng.random(n)
        lhs, rhs = lemma_gap(a, b, sigma)
        gap = lhs - rhs
        i = int(np.argmin(gap))
        if gap[i] < min_gap:
            min_gap = float(gap[i])
            worst = {"a": a[i].tolist(), "b": b[i].tolist(), "sigma": float(sigma[i])}
        l2, r2 = lemma_gap(a, b, np.full(n, 2.0))
        eq_err = max(eq_err, float(np.max(np.abs(l2 - r2) / np.maximum(np.abs(l2), 1e-300))))
    passed = min_gap >= -slack and eq_err <= 1e-12
    return LemmaSweep(samples, seed, min_gap, worst, eq_err, time.perf_counter() - start, passed)


# ---------------------------------------------------------------------------
# Ordering of sub- and super-solutions


def ordering_tolerance(h: float, dt_max: float) -> float:
    return 10 * h * h + 10 * dt_max


def comparison_hypotheses(problem: ProblemSpec) -> list[str]:
    """Hypotheses of the comparison theorem that ``problem`` violates."""
    notes = []
    coefs = (problem.alpha, problem.beta, problem.gamma)
    if not (any(c > 0 for c in coefs) or all(c == 0 for c in coefs)):
        notes.append("none of alpha, beta, gamma is positive and they are not all zero")
    if problem.beta > 0 and any(r < problem.p / 2 for r in problem.r_list):
        notes.append("beta > 0 requires r_j >= p/2")
    return notes


@dataclass
class OrderingReport:
    max_violation: float
    tolerance: float
    passed: bool
    first_violation_time: float | None = None
    first_violation_index: tuple[int, ...] | None = None
    samples: int = 0
    hypothesis_violations: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def check_ordering(u_trace: Sequence[np.ndarray], v_trace, tol: float, times: Sequence[float] | None = None,
                   mask: Sequence[np.ndarray] | np.ndarray | None = None,
                   problem: ProblemSpec | None = None) -> OrderingReport:
    """Largest (u - v)_+ over all samples and nodes.

    ``v_trace`` may be a single array, used at every sample (a static
    barrier).  ``mask`` restricts the comparison to selected nodes, per
    sample or globally.
    """
    u_trace = list(u_trace)
    if isinstance(v_trace, np.ndarray) and (not u_trace or v_trace.shape == np.shape(u_trace[0])):
        v_trace = [v_trace] * len(u_trace)
    v_trace = list(v_trace)
    if len(u_trace) != len(v_trace):
        raise ValueError(f"traces have {len(u_trace)} and {len(v_trace)} samples")
    if times is not None and len(times) != len(u_trace):
        raise ValueError("times do not match the traces")
    if isinstance(mask, np.ndarray) or mask is None:
        mask = [mask] * len(u_trace)
    worst, first_t, first_idx = 0.0, None, None
    for k, (u, v, m) in enumerate(zip(u_trace, v_trace, mask)):
        if np.shape(u) != np.shape(v):
            raise ValueError(f"sample {k}: shapes {np.shape(u)} and {np.shape(v)} differ")
        gap = np.maximum(np.asarray(u) - np.asarray(v), 0.0)
        if m is not None:
            gap = np.where(m, gap, 0.0)
        g = float(gap.max()) if gap.size else 0.0
        if g > worst:
            worst = g
        if g > tol and first_t is None:
            first_t = float(times[k]) if times is not None else float(k)
            first_idx = tuple(int(i) for i in np.unravel_index(np.argmax(gap), gap.shape))
    notes = comparison_hypotheses(problem) if problem is not None else []
    return OrderingReport(worst, tol, worst <= tol, first_t, first_idx, len(u_trace), notes)


@dataclass
class PairTrace:
    times: list[float]
    lower: list[np.ndarray]
    upper: list[np.ndarray]
    dt_max: float


def evolve_pair(lower: ProblemSpec, upper: ProblemSpec, config: SolverConfig) -> PairTrace:
    """Advance two problems on the same grid with a shared step size."""
    if lower.grid != upper.grid or lower.group != upper.group:
        raise ValueError("paired problems must share group and grid")
    lower.validate()
    upper.validate()
    config.validate()
    ul = apply_dirichlet(lower.grid, lower.u0.copy())
    uu = apply_dirichlet(upper.grid, upper.u0.copy())
    out = PairTrace([0.0], [ul.copy()], [uu.copy()], 0.0)
    t, n = 0.0, 0
    while t < config.t_end:
        gl = horizontal_gradient(lower.group, lower.grid, ul)
        gu = horizontal_gradient(upper.group, upper.grid, uu)
        dt = min(cfl_dt(lower, ul, config, gl), cfl_dt(upper, uu, config, gu), config.t_end - t)
        ul = step(lower, ul, dt, config, gl)
        uu = step(upper, uu, dt, config, gu)
        t += dt
        n += 1
        out.dt_max = max(out.dt_max, dt)
        if n % config.trace_stride == 0 or t >= config.t_end:
            out.times.append(t)
            out.lower.append(ul.copy())
            out.upper.append(uu.copy())
        if not (np.isfinite(ul).all() and np.isfinite(uu).all()):
            break
    return out


# ---------------------------------------------------------------------------
# Scenario configuration


SCENARIO_DEFAULTS: dict[str, dict] = {
    "boundedness-3.2i": dict(alpha=-1.0, beta=1.0, q=(2.0,), r=(1.5,), t_end=5.0, trace_stride=50),
    "boundedness-3.2ii": dict(alpha=1.0, beta=-1.0, q=(1.0,), r=(2.0,), t_end=5.0, trace_stride=50),
    "boundedness-3.5": dict(alpha=1.0, gamma=-1.0, q=(3.0,), s=(2.0,), t_end=5.0, trace_stride=50),
    "blowup-3.3": dict(alpha=1.0, beta=-1.0, q=(3.0,), r=(1.5,), t_end=0.0, trace_stride=1),
    "blowup-3.6": dict(alpha=1.0, gamma=-1.0, q=(3.0,), s=(1.5,), t_end=0.0, trace_stride=1),
    "blowup-3.4": dict(alpha=-1.0, beta=1.0, q=(1.0,), r=(3.0,), t_end=0.25, trace_stride=1),
    "custom": dict(t_end=1.0, trace_stride=10),
}


@dataclass
class ExperimentConfig:
    """Everything needed to run one scenario.

    ``t_end = 0`` for the blow-up scenarios means "twice the profile's
    blow-up time bound".
    """

    scenario: str = "custom"
    group: str = "euclidean:2"
    n: int = 33
    half_width: float = 0.5
    p: float = 2.0
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    q: tuple[float, ...] = ()
    r: tuple[float, ...] = ()
    s: tuple[float, ...] = ()
    amplitude: float = 1.0
    gap: float = 0.5
    t_end: float = 1.0
    cfl: float = 0.9
    eps_reg: float = 1e-8
    u_max: float = 1e6
    min_dt: float = 1e-12
    trace_stride: int = 1
    certificate_samples: int = 256
    profile_margin: float = 1.0
    ladder: int = 8
    seed: int = 0
    output_dir: str = "output"

    @classmethod
    def for_scenario(cls, scenario: str, **overrides) -> "ExperimentConfig":
        scenario = normalize_scenario(scenario)
        merged = dict(SCENARIO_DEFAULTS[scenario])
        merged.update(overrides)
        known = {f.name for f in fields(cls)}
        unknown = set(merged) - known
        if unknown:
            raise KeyError(f"unknown configuration keys: {sorted(unknown)}")
        for key in ("q", "r", "s"):
            if key in merged:
                v = merged[key]
                merged[key] = tuple(float(x) for x in (v if isinstance(v, (list, tuple)) else [v]))
        return cls(scenario=scenario, **merged)

    def build(self) -> tuple[GroupSpec, Grid]:
        group = parse_group(self.group)
        grid = Grid.box(group.N, self.n, self.half_width)
        return group, grid

    def solver_config(self, t_end: float | None = None) -> SolverConfig:
        return SolverConfig(eps_reg=self.eps_reg, cfl=self.cfl, u_max=self.u_max, min_dt=self.min_dt,
                            t_end=self.t_end if t_end is None else t_end, trace_stride=self.trace_stride)

    def problem(self, u0: np.ndarray) -> ProblemSpec:
        group, grid = self.build()
        return ProblemSpec(group, grid, u0, p=self.p, alpha=self.alpha, beta=self.beta, gamma=self.gamma,
                           q_list=self.q, r_list=self.r, s_list=self.s)


def normalize_scenario(name: str) -> str:
    aliases = {"3.2i": "boundedness-3.2i", "3.2ii": "boundedness-3.2ii", "3.5": "boundedness-3.5",
               "3.3": "blowup-3.3", "3.6": "blowup-3.6", "3.4": "blowup-3.4"}
    name = aliases.get(name, name)
    if name not in SCENARIO_DEFAULTS:
        raise KeyError(f"unknown scenario {name!r}; expected one of {sorted(SCENARIO_DEFAULTS)}")
    return name


def default_u0(group: GroupSpec, grid: Grid, amplitude: float = 1.0) -> np.ndarray:
    """amplitude * prod_k cos(pi x_k / width_k) on a centred box; zero on the faces."""
    u = np.full(grid.extents, float(amplitude))
    for k, c in enumerate(grid.coords()):
        width = grid.upper[k] - grid.lower[k]
        center = 0.5 * (grid.upper[k] + grid.lower[k])
        u = u * np.cos(np.pi * (c - center) / width)
    u = np.clip(u, 0.0, None)
    return apply_dirichlet(grid, u)


# ---------------------------------------------------------------------------
# Results


@dataclass
class Check:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)


@dataclass
class ScenarioResult:
    scenario: str
    params: dict
    outcome: str
    checks: list[Check] = field(default_factory=list)
    bound: float | None = None
    blowup_time: float | None = None
    certificates: list[dict] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    trace: SolveTrace | None = field(default=None, repr=False)
    grid: Grid | None = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "passed": self.passed,
            "params": self.params,
            "outcome": self.outcome,
            "bound": self.bound,
            "blowup_time": self.blowup_time,
            "checks": [asdict(c) for c in self.checks],
            "certificates": self.certificates,
            "metrics": self.metrics,
            "notes": self.notes,
        }


def _params(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d.pop("output_dir")
    for k in ("q", "r", "s"):
        d[k] = list(d[k])
    return d


def _sample_at(times, values, t):
    i = int(np.searchsorted(times, t))
    return float(values[min(i, len(values) - 1)])


# ---------------------------------------------------------------------------
# Boundedness


def _unit(x) -> bool:
    return abs(abs(x) - 1.0) < 1e-12


def _boundedness_barrier(cfg: ExperimentConfig, geo: bar.BarrierGeometry, u0_sup: float, N1: int):
    p, a, b, g = cfg.p, cfg.alpha, cfg.beta, cfg.gamma
    sc = cfg.scenario
    if sc == "boundedness-3.2i":
        if len(cfg.q) != 1 or len(cfg.r) != 1 or g != 0:
            raise bar.RegimeError("problem with one q, one r and gamma = 0 expected")
        q, r = cfg.q[0], cfg.r[0]
        if not (a == -1 and b == 1):
            raise bar.RegimeError("the barrier recipe assumes beta = -alpha = 1")
        if not (p > 1 and r > 1 and p <= r + 1 and p / 2 <= r < q):
            raise bar.RegimeError(f"regime (i) needs p,r > 1, p <= r+1, p/2 <= r < q; got p={p}, q={q}, r={r}")
        return bar.recipe_v1(p, q, r, N1, geo.R_prime, geo.eps, u0_sup, geo.x0)
    if sc == "boundedness-3.2ii":
        if len(cfg.q) != 1 or len(cfg.r) != 1 or g != 0:
            raise bar.RegimeError("problem with one q, one r and gamma = 0 expected")
        q, r = cfg.q[0], cfg.r[0]
        if not (a == 1 and b == -1):
            raise bar.RegimeError("the barrier recipe assumes alpha = -beta = 1")
        if not (p > 1 and q >= 1 and p < r + 1 and q <= r):
            raise bar.RegimeError(f"regime (ii) needs p > 1, q >= 1, p < r+1, q <= r; got p={p}, q={q}, r={r}")
        if r == q:
            return bar.recipe_v3(p, r, N1, geo.R_prime, geo.eps, u0_sup, geo.x0)
        return bar.recipe_v2(p, q, r, N1, geo.R_prime, geo.eps, u0_sup, geo.x0)
    if sc == "boundedness-3.5":
        if b != 0 or not cfg.q or len(cfg.q) != len(cfg.s):
            raise bar.RegimeError("problem with beta = 0 and equally long q and s lists expected")
        qs, ss = cfg.q, cfg.s
        if a == 1 and g == -1:
            if not (min(qs) >= 1 and 1 < p < min(ss) + 1 and all(si < qi for si, qi in zip(ss, qs))):
                raise bar.RegimeError("case (i) needs q_i >= 1, 1 < p < min s + 1, s_i < q_i")
            return bar.recipe_v4(p, qs, ss, N1, geo.R_prime, geo.eps, u0_sup, geo.x0)
        if a == -1 and g == 1:
            if not (min(ss) >= 1 and 1 < p < min(qs) + 1 and all(si > qi for si, qi in zip(ss, qs))):
                raise bar.RegimeError("case (ii) needs s_i >= 1, 1 < p < min q + 1, s_i > q_i")
            # case (ii) swaps the roles of the two sums
            return bar.recipe_v4(p, ss, qs, N1, geo.R_prime, geo.eps, u0_sup, geo.x0)
        raise bar.RegimeError("the barrier recipe assumes alpha = -gamma = +-1")
    raise KeyError(f"{sc} is not a boundedness scenario")


def run_boundedness(scenario: str = "boundedness-3.2i", overrides: dict | None = None) -> ScenarioResult:
    """Solve a bounded regime and compare against its certified barrier."""
    cfg = ExperimentConfig.for_scenario(scenario, **(overrides or {}))
    if not cfg.scenario.startswith("boundedness"):
        raise KeyError(f"{cfg.scenario} is not a boundedness scenario")
    group, grid = cfg.build()
    u0 = default_u0(group, grid, cfg.amplitude)
    problem = cfg.problem(u0)
    problem.validate()
    geo = bar.barrier_geometry(group, grid, cfg.gap)
    barrier = _boundedness_barrier(cfg, geo, float(u0.max()), group.N1)
    cert = bar.certify_barrier(barrier, cfg.certificate_samples)

    trace = solve(problem, cfg.solver_config(), keep_fields=True)
    res = ScenarioResult(cfg.scenario, _params(cfg), trace.outcome.value, bound=barrier.bound,
                         certificates=[cert.to_dict()], trace=trace, grid=grid)
    sup = np.asarray(trace.sup_norm)
    times = np.asarray(trace.times)
    h = grid.h
    res.checks.append(Check("completed", trace.outcome is Outcome.COMPLETED, {"outcome": trace.outcome.value}))
    res.checks.append(Check("barrier_certificate", cert.passed, {"certificate": cert.name, "min": cert.min}))
    res.checks.append(Check("sup_norm_below_bound", bool(np.all(sup <= barrier.bound)),
                            {"max_sup_norm": float(sup.max()), "bound": barrier.bound}))
    vfield = barrier.field(group, grid)
    order = check_ordering(trace.fields, vfield, ordering_tolerance(h, trace.dt_max), times=trace.times,
                           problem=problem)
    res.checks.append(Check("below_barrier_field", order.passed, order.to_dict()))
    umin = float(min(f.min() for f in trace.fields))
    res.checks.append(Check("nonnegative", umin >= -10 * h * h, {"min_u": umin, "slack": 10 * h * h}))
    res.metrics.update(
        sup_initial=float(sup[0]),
        sup_at_t1=_sample_at(times, sup, 1.0) if times[-1] >= 1.0 else None,
        sup_final=float(sup[-1]),
        steps=trace.steps,
        dt_max=trace.dt_max,
        barrier=barrier.to_dict(),
        eps=geo.eps,
        R_prime=geo.R_prime,
    )
    if cfg.scenario == "boundedness-3.5" and not cert.passed:
        res.notes.append("no K4 makes the V4 residual nonnegative when s_i < q_i; see the certificate minimum")
    return res


# ---------------------------------------------------------------------------
# Blow-up from the self-similar sub-solution


def _inscribed_radius(group: GroupSpec, grid: Grid) -> float:
    return min(min(-grid.lower[k], grid.upper[k]) for k in range(group.N1))


def run_blowup(scenario: str = "blowup-3.3", overrides: dict | None = None,
               exploratory_scale: float | None = None) -> ScenarioResult:
    """Start above the profile floor and check blow-up before the profile's own time.

    With ``exploratory_scale`` the initial data is instead that multiple of
    the floor; the run is recorded without any assertion.
    """
    cfg = ExperimentConfig.for_scenario(scenario, **(overrides or {}))
    if cfg.scenario not in ("blowup-3.3", "blowup-3.6"):
        raise KeyError(f"{cfg.scenario} is not a profile blow-up scenario")
    group, grid = cfg.build()
    if not group.is_euclidean:
        raise bar.RegimeError("the radial profile is positive on the x3 faces of a Heisenberg box; use euclidean")
    if len(cfg.q) != 1:
        raise bar.RegimeError("a single q exponent is expected")
    q = cfg.q[0]
    if cfg.scenario == "blowup-3.3":
        if not (cfg.alpha == 1 and cfg.beta == -1 and cfg.gamma == 0 and len(cfg.r) == 1):
            raise bar.RegimeError("the profile assumes alpha = -beta = 1, gamma = 0 and one r")
        prof = bar.blowup_profile(cfg.p, q, r=cfg.r[0], N1=group.N1)
    else:
        if not (cfg.alpha == 1 and cfg.gamma == -1 and cfg.beta == 0 and len(cfg.s) == 1):
            raise bar.RegimeError("the profile assumes alpha = -gamma = 1, beta = 0 and one s")
        prof = bar.blowup_profile(cfg.p, q, s=cfg.s[0], N1=group.N1)
    h = grid.h
    certified_rung = prof.ladder_rung
    room = _inscribed_radius(group, grid) - 3 * h
    m = prof.ladder_rung
    while prof.support_radius(bar.ladder_time(prof.delta, m)) > room:
        m += 1
        if m > bar.LADDER_MAX:
            raise bar.RegimeError("profile support does not fit in the domain on the t0 ladder")
    prof = bar.with_rung(prof, m)
    cert = bar.certify_profile(prof)

    rho = first_stratum_radius(group, grid)
    floor = prof.floor(group, grid)
    rs = float(prof.support_radius(prof.t0))
    collar = np.clip(1 - (rho - rs) / (2 * h), 0.0, 1.0) * cfg.profile_margin
    u0 = np.where(rho < rs, np.maximum(floor, 0) + cfg.profile_margin, collar)
    if exploratory_scale is not None:
        u0 = exploratory_scale * np.maximum(floor, 0)
    u0 = apply_dirichlet(grid, u0)
    problem = cfg.problem(u0)
    problem.validate()
    T_bound = prof.t_star - prof.t0
    t_end = cfg.t_end if cfg.t_end > 0 else 2 * T_bound
    trace = solve(problem, cfg.solver_config(t_end), keep_fields=True)
    res = ScenarioResult(cfg.scenario, _params(cfg), trace.outcome.value, bound=T_bound,
                         blowup_time=trace.blowup_time, certificates=[cert.to_dict()], trace=trace, grid=grid)
    res.metrics.update(profile=prof.to_dict(), certified_rung=certified_rung, adopted_rung=m,
                       support_radius=rs, u0_sup=float(u0.max()), steps=trace.steps, dt_max=trace.dt_max,
                       time_bound_with_slack=1.2 * T_bound)
    if exploratory_scale is not None:
        res.notes.append(f"exploratory run at {exploratory_scale:g} x profile floor; no assertion")
        return res

    tol = ordering_tolerance(h, trace.dt_max)
    lower, upper, masks, times = [], [], [], []
    for t, u in zip(trace.times, trace.fields):
        if trace.blowup_time is not None and t >= trace.blowup_time:
            break
        if t + prof.t0 >= prof.t_star:
            break
        v = prof.field(group, grid, t + prof.t0)
        lower.append(v)
        upper.append(u)
        masks.append(v > 0)
        times.append(t)
    order = check_ordering(lower, upper, tol, times=times, mask=masks, problem=problem)
    res.checks.append(Check("profile_certificate", cert.passed, {"certificate": cert.name, "max": cert.max}))
    res.checks.append(Check("blowup_detected", trace.outcome is Outcome.BLOWUP, {"outcome": trace.outcome.value}))
    bt = trace.blowup_time
    res.checks.append(Check("blowup_time_within_bound", bt is not None and bt <= 1.2 * T_bound,
                            {"blowup_time": bt, "bound": T_bound, "slack": 0.2}))
    res.checks.append(Check("above_subsolution", order.passed, order.to_dict()))
    return res


# ---------------------------------------------------------------------------
# Energy growth


def fit_energy_slope(times, y, decades: float = 1.0) -> tuple[float, int]:
    """Least-squares slope of log y' against log y over the last ``decades`` of y."""
    times, y = np.asarray(times, dtype=float), np.asarray(y, dtype=float)
    dy = np.diff(y) / np.diff(times)
    ym = 0.5 * (y[1:] + y[:-1])
    sel = (ym >= ym[-1] / 10 ** decades) & (dy > 0) & (ym > 0)
    if sel.sum() < 3:
        return math.nan, int(sel.sum())
    slope = np.polyfit(np.log(ym[sel]), np.log(dy[sel]), 1)[0]
    return float(slope), int(sel.sum())


def run_energy_blowup(p: float = 2.0, q: float = 1.0, r: float = 3.0, alpha: float = -1.0, beta: float = 1.0,
                      overrides: dict | None = None) -> ScenarioResult:
    """Scale up the initial bump until blow-up, then fit the growth exponent of y."""
    over = dict(overrides or {})
    over.update(p=p, q=(q,), r=(r,), alpha=alpha, beta=beta)
    cfg = ExperimentConfig.for_scenario("blowup-3.4", **over)
    if not (alpha < 0 and beta > 0 and p > 1 and r > 1 and q > 0):
        raise bar.RegimeError("energy blow-up needs alpha < 0, beta > 0, p, r > 1, q > 0")
    notes = []
    if r > max(p, q):
        pass
    elif r == q and q > p:
        notes.append(f"r = q case; beta/|alpha| = {beta / abs(alpha):g} (no quantitative threshold asserted)")
    else:
        raise bar.RegimeError(f"need r > max(p, q) or r = q > p; got p={p}, q={q}, r={r}")
    kappa = r / (r - p)
    exponent = (r + kappa) / (kappa + 1)
    group, grid = cfg.build()
    base = default_u0(group, grid, cfg.amplitude)
    weights = grid.quadrature_weights()
    rungs, trace, scale = [], None, None
    for k in range(cfg.ladder):
        c = 2.0 ** k
        problem = cfg.problem(c * base)
        problem.validate()
        tr = solve(problem, cfg.solver_config(), kappa=kappa, keep_fields=True)
        mass = float(np.sum(weights * (c * base) ** ((2 * r - p) / (r - p))))
        rungs.append({"scale": c, "outcome": tr.outcome.value, "blowup_time": tr.blowup_time, "mass": mass,
                      "y0": tr.energy[0]})
        if tr.outcome is Outcome.BLOWUP:
            trace, scale = tr, c
            break
        tr.fields.clear()
    res = ScenarioResult("blowup-3.4", _params(cfg), trace.outcome.value if trace else "completed",
                         blowup_time=trace.blowup_time if trace else None, trace=trace, grid=grid, notes=notes)
    res.metrics.update(kappa=kappa, exponent=exponent, ladder=rungs, scale=scale)
    res.checks.append(Check("blowup_detected", trace is not None, {"rungs": len(rungs)}))
    if trace is not None:
        slope, used = fit_energy_slope(trace.times, trace.energy)
        res.metrics.update(slope=slope, slope_samples=used)
        res.checks.append(Check("energy_growth_exponent", bool(slope >= exponent - 0.25),
                                {"slope": slope, "required": exponent - 0.25, "samples": used}))
    return res


# ---------------------------------------------------------------------------
# Comparison of an ordered pair, and free-form runs


def run_ordering_pair(overrides: dict | None = None, factor: float = 0.5) -> tuple[OrderingReport, PairTrace]:
    """Evolve factor*u0 and u0 together and check the smaller stays below."""
    over = {"alpha": 0.0, "beta": 0.0, "gamma": 0.0, "q": (), "r": (), "s": ()}
    over.update(overrides or {})
    cfg = ExperimentConfig.for_scenario("custom", **over)
    group, grid = cfg.build()
    u0 = default_u0(group, grid, cfg.amplitude)
    pair = evolve_pair(cfg.problem(factor * u0), cfg.problem(u0), cfg.solver_config())
    report = check_ordering(pair.lower, pair.upper, ordering_tolerance(grid.h, pair.dt_max), times=pair.times,
                            problem=cfg.problem(u0))
    return report, pair


def run_custom(cfg: ExperimentConfig) -> ScenarioResult:
    group, grid = cfg.build()
    problem = cfg.problem(default_u0(group, grid, cfg.amplitude))
    problem.validate()
    kappa = None
    if cfg.beta > 0 and cfg.r and cfg.r[0] > cfg.p:
        kappa = cfg.r[0] / (cfg.r[0] - cfg.p)
    trace = solve(problem, cfg.solver_config(), kappa=kappa, keep_fields=True)
    res = ScenarioResult(cfg.scenario, _params(cfg), trace.outcome.value, blowup_time=trace.blowup_time,
                         trace=trace, grid=grid)
    res.checks.append(Check("stable", trace.outcome is not Outcome.UNSTABLE, {"outcome": trace.outcome.value}))
    res.notes.extend(comparison_hypotheses(problem))
    return res


def run_scenario(cfg: ExperimentConfig) -> ScenarioResult:
    """Dispatch on ``cfg.scenario``."""
    over = {f.name: getattr(cfg, f.name) for f in fields(cfg) if f.name != "scenario"}
    if cfg.scenario.startswith("boundedness"):
        return run_boundedness(cfg.scenario, over)
    if cfg.scenario in ("blowup-3.3", "blowup-3.6"):
        return run_blowup(cfg.scenario, over)
    if cfg.scenario == "blowup-3.4":
        rq = over.pop("r"), over.pop("q")
        if len(rq[0]) != 1 or len(rq[1]) != 1:
            raise bar.RegimeError("a single r and q are expected")
        p, alpha, beta = over.pop("p"), over.pop("alpha"), over.pop("beta")
        return run_energy_blowup(p, rq[1][0], rq[0][0], alpha, beta, over)
    return run_custom(cfg)


__all__ = [
    "Check", "ExperimentConfig", "LemmaSweep", "OrderingReport", "PairTrace", "ScenarioResult",
    "check_ordering", "comparison_hypotheses", "default_u0", "evolve_pair", "fit_energy_slope",
    "lemma_gap", "lemma_sweep", "ordering_tolerance", "run_blowup", "run_boundedness", "run_custom",
    "run_energy_blowup", "run_ordering_pair", "run_scenario", "ProblemError",
]


# ---------------------------------------------------------------------------
# Convergence of the radial identities


@dataclass
class IdentityConvergence:
    group: str
    identity: str
    b: float
    hs: list[float]
    errors: list[float]
    order: float
    exact: bool
    passed: bool


def _identity_grid(group: GroupSpec, h: float) -> Grid:
    # the box [1,2]^N1 keeps |x'| >= 1, far from the singularity at x' = 0
    n = int(round(1 / h)) + 1
    lower = [1.0] * group.N1 + [-0.5] * (group.N - group.N1)
    upper = [2.0] * group.N1 + [0.5] * (group.N - group.N1)
    return Grid(tuple(lower), tuple(upper), (n,) * group.N)


def identity_convergence(group_name: str, identity: str, b: float,
                         hs: Sequence[float] = (1 / 16, 1 / 32, 1 / 64), min_order: float = 1.9,
                         exact_tol: float = 1e-10) -> IdentityConvergence:
    """Max-norm error of a discrete radial identity and its least-squares order in h.

    ``identity`` is ``"gradient"`` (|grad_H |x'|^b| = b|x'|^(b-1)) or
    ``"divergence"`` (div_H x'/|x'|^b = (N1-b)/|x'|^b).  Nodes with
    |x'| < 3h are excluded.
    """
    from .geometry import (horizontal_divergence, horizontal_gradient as hgrad, horizontal_norm,
                           radial_divergence, radial_gradient_norm)

    group = parse_group(group_name)
    errors = []
    for h in hs:
        grid = _identity_grid(group, h)
        rho = first_stratum_radius(group, grid)
        keep = rho >= 3 * h
        if identity == "gradient":
            approx = horizontal_norm(hgrad(group, grid, rho ** b))
            exact = radial_gradient_norm(rho, b)
        elif identity == "divergence":
            coords = grid.coords()
            approx = horizontal_divergence(group, grid, [coords[j] / rho ** b for j in range(group.N1)])
            exact = radial_divergence(rho, b, group.N1)
        else:
            raise ValueError(f"unknown identity {identity!r}")
        errors.append(float(np.max(np.abs(approx - exact)[keep])))
    is_exact = max(errors) < exact_tol
    order = math.inf if is_exact else float(np.polyfit(np.log(hs), np.log(errors), 1)[0])
    return IdentityConvergence(group.label(), identity, b, list(hs), errors, order, is_exact,
                               is_exact or order >= min_order)
