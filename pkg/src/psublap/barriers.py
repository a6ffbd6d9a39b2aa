"""Closed-form comparison functions for the p-sub-Laplacian problems.

Super-solutions (barriers) are radial in the first-stratum distance
R = |x' - x0'| from a base point x0 outside the domain:

    V1 = K1 exp(sigma1 R)            (absorption beats gradient source)
    V2 = (K2/sigma2) R^sigma2        (gradient absorption, r > q)
    V3 = K3 R^sigma3                 (gradient absorption, r = q)
    V4 = (K4/sigma4) R^sigma4        (two power-type reaction sums)

with sigma2 = sigma4 = p/(p-1).  The blow-up sub-solution is the
self-similar profile

    v(t, |x'|) = (1 - delta t)^(-k1) F(|x'| / (1 - delta t)^k2),
    F(y) = 1 + A/sigma - y^sigma / (sigma A^(sigma-1)).

Every residual here is evaluated in closed form; ``certify_sign`` turns a
residual into a sampled sign certificate.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import GroupSpec, Grid, first_stratum_radius


class RegimeError(ValueError):
    """Parameters outside the regime where a construction applies."""


# ---------------------------------------------------------------------------
# Placement of the base point


@dataclass(frozen=True)
class BarrierGeometry:
    x0: tuple[float, ...]
    R_prime: float
    eps: float
    min_distance: float
    max_distance: float


def barrier_geometry(group: GroupSpec, grid: Grid, gap: float = 0.5) -> BarrierGeometry:
    """Put x0 on the first horizontal axis, ``gap`` beyond the upper face.

    eps = min(1/2, dist(x0', Omega')/2).  Raises RegimeError when some node
    violates eps <= |x0' - x'| < R' + 1.
    """
    x0 = [0.0] * group.N1
    x0[0] = grid.upper[0] + gap
    rho = first_stratum_radius(group, grid)
    R_prime = float(rho.max())
    dist = first_stratum_radius(group, grid, x0)
    # distance from x0' to the projected box, which contains every x'
    lo = np.array(grid.lower[: group.N1])
    hi = np.array(grid.upper[: group.N1])
    nearest = np.clip(x0, lo, hi)
    d_box = float(np.linalg.norm(np.asarray(x0) - nearest))
    eps = min(0.5, 0.5 * d_box)
    if not (eps > 0 and float(dist.min()) >= eps and float(dist.max()) < R_prime + 1):
        raise RegimeError(
            f"base point {x0} violates eps <= |x0'-x'| < R'+1 "
            f"(eps={eps:g}, distances in [{dist.min():g}, {dist.max():g}], R'={R_prime:g})"
        )
    return BarrierGeometry(tuple(x0), R_prime, eps, float(dist.min()), float(dist.max()))


def _check_R(R, eps, R_prime):
    R = np.asarray(R, dtype=float)
    if np.any(R < eps) or np.any(R >= R_prime + 1):
        raise ValueError(f"R must lie in [{eps:g}, {R_prime + 1:g})")
    return R


# ---------------------------------------------------------------------------
# Barrier types


@dataclass
class _RadialBarrier:
    p: float
    N1: int
    R_prime: float
    eps: float
    x0: tuple[float, ...] = ()

    def field(self, group: GroupSpec, grid: Grid) -> np.ndarray:
        x0 = self.x0 or (0.0,) * group.N1
        return self.value(first_stratum_radius(group, grid, x0))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = type(self).__name__
        d["bound"] = self.bound
        return d


@dataclass
class BarrierV1(_RadialBarrier):
    q: float = 2.0
    r: float = 1.5
    K: float = 1.0
    sigma: float = 1.0

    def value(self, R):
        return self.K * np.exp(self.sigma * np.asarray(R, dtype=float))

    def sublaplacian(self, R):
        R = np.asarray(R, dtype=float)
        p, s, K = self.p, self.sigma, self.K
        e = np.exp((p - 1) * s * R)
        return (p - 1) * s ** p * K ** (p - 1) * e + (self.N1 - 1) / R * s ** (p - 1) * K ** (p - 1) * e

    @property
    def bound(self) -> float:
        return self.K * math.exp(self.sigma * (self.R_prime + 1))


@dataclass
class BarrierV2(_RadialBarrier):
    q: float = 1.0
    r: float = 2.0
    K: float = 1.0

    @property
    def sigma(self) -> float:
        return self.p / (self.p - 1)

    def value(self, R):
        return self.K / self.sigma * np.asarray(R, dtype=float) ** self.sigma

    def sublaplacian(self, R):
        return np.full_like(np.asarray(R, dtype=float), self.N1 * self.K ** (self.p - 1))

    @property
    def bound(self) -> float:
        return self.K * (self.R_prime + 1) ** self.sigma / self.sigma


@dataclass
class BarrierV3(_RadialBarrier):
    r: float = 2.0
    K: float = 1.0
    sigma: float = 1.0

    def value(self, R):
        return self.K * np.asarray(R, dtype=float) ** self.sigma

    def sublaplacian(self, R):
        R = np.asarray(R, dtype=float)
        p, s = self.p, self.sigma
        c = (s - 1) * (p - 1) + self.N1 - 1
        return (self.K * s) ** (p - 1) * c * R ** ((s - 1) * (p - 1) - 1)

    @property
    def bound(self) -> float:
        return self.K * (self.R_prime + 1) ** self.sigma


@dataclass
class BarrierV4(_RadialBarrier):
    q_list: tuple[float, ...] = ()
    s_list: tuple[float, ...] = ()
    K: float = 1.0

    @property
    def sigma(self) -> float:
        return self.p / (self.p - 1)

    @property
    def s_min(self) -> float:
        return min(self.s_list)

    @property
    def q_min(self) -> float:
        return min(self.q_list)

    def value(self, R):
        return self.K / self.sigma * np.asarray(R, dtype=float) ** self.sigma

    def sublaplacian(self, R):
        return np.full_like(np.asarray(R, dtype=float), self.N1 * self.K ** (self.p - 1))

    @property
    def bound(self) -> float:
        return self.K * (self.R_prime + 1) ** self.sigma / self.sigma


# ---------------------------------------------------------------------------
# Recipes


def _check_eps(eps):
    if not 0 < eps < 1:
        raise RegimeError(f"eps must lie in (0, 1), got {eps}")


def recipe_v1(p, q, r, N1, R_prime, eps, u0_supnorm, x0=()) -> BarrierV1:
    """V1 for alpha = -1, beta = 1 with p <= r + 1 and p/2 <= r < q.

    Only the conditions the construction itself uses are enforced; the
    boundedness scenario additionally requires r > 1.

    When r + 1 > p the choice sigma1 (r-p+1)(R'+1) = 1 turns the factor
    exp((r-p+1) sigma1 (R'+1)) into e.
    """
    _check_eps(eps)
    if not (p > 1 and r > 0 and p <= r + 1 and p / 2 <= r < q):
        raise RegimeError(f"V1 needs p > 1, p <= r+1, p/2 <= r < q; got p={p}, q={q}, r={r}")
    if r + 1 > p:
        sigma = 1.0 / ((r - p + 1) * (R_prime + 1))
        K = max(
            (2 * math.e * sigma ** r) ** (1 / (q - r)),
            (2 * ((p - 1) * sigma ** p + (N1 - 1) * sigma ** (p - 1) / eps)) ** (1 / (q + 1 - p)),
            u0_supnorm,
        )
    else:
        sigma = 1.0
        K = max(2 ** (1 / (q - r)), (2 * (p - 1 + (N1 - 1) / eps)) ** (1 / (q + 1 - p)), u0_supnorm)
    return BarrierV1(p=p, N1=N1, R_prime=R_prime, eps=eps, x0=tuple(x0), q=q, r=r, K=K, sigma=sigma)


def recipe_v2(p, q, r, N1, R_prime, eps, u0_supnorm, x0=()) -> BarrierV2:
    """V2 for alpha = 1, beta = -1 with q >= 1, p < r + 1 and r > q."""
    _check_eps(eps)
    if r == q:
        raise RegimeError("r == q is handled by recipe_v3")
    if not (p > 1 and q >= 1 and p < r + 1 and r > q):
        raise RegimeError(f"V2 needs p > 1, q >= 1, p < r+1, r > q; got p={p}, q={q}, r={r}")
    sigma = p / (p - 1)
    tail = (2 / sigma ** q) ** (1 / (r - q))
    expo = (q * p - r) / ((p - 1) * (r - q))
    K = max(
        sigma * u0_supnorm / eps ** sigma,
        (2 * N1 / eps ** (r / (p - 1))) ** (1 / (r - p + 1)),
        tail * (R_prime + 1) ** expo,
        tail * eps ** expo,
    )
    return BarrierV2(p=p, N1=N1, R_prime=R_prime, eps=eps, x0=tuple(x0), q=q, r=r, K=K)


def recipe_v3(p, r, N1, R_prime, eps, u0_supnorm, x0=()) -> BarrierV3:
    """V3 for the borderline case r = q; both constants take their lower bounds."""
    _check_eps(eps)
    if not (p > 1 and r > p - 1 and r >= 1 and p < r + 1):
        raise RegimeError(f"V3 needs p > 1, q = r >= 1, r > p - 1; got p={p}, r={r}")
    sigma = max(1.0, 2 ** (1 / r) * (R_prime + 1))
    c = (p - 1) * (sigma - 1) + N1 - 1
    K = max(
        eps ** (-sigma) * u0_supnorm,
        (2 * c / eps ** ((r - p + 1) * (sigma - 1) + 1)) ** (1 / (r - p + 1)),
    )
    return BarrierV3(p=p, N1=N1, R_prime=R_prime, eps=eps, x0=tuple(x0), r=r, K=K, sigma=sigma)


def recipe_v4(p, q_list, s_list, N1, R_prime, eps, u0_supnorm, x0=()) -> BarrierV4:
    """Three-way max for K4; only the condition s_min > p - 1 is enforced here.

    The recipe's last clause, 2 sigma4 eps^(-p/(p-1)), only controls the
    q-terms when every s_i exceeds the matching q_i; scenario code gates the
    theorem regimes separately.
    """
    _check_eps(eps)
    q_list, s_list = tuple(map(float, q_list)), tuple(map(float, s_list))
    if not s_list or len(q_list) != len(s_list):
        raise RegimeError("q_list and s_list must be nonempty and of equal length")
    s_min = min(s_list)
    if not s_min > p - 1:
        raise RegimeError(f"V4 needs min s_i > p - 1, got {s_min} with p={p}")
    sigma = p / (p - 1)
    total = sum(eps ** (s * p / (p - 1)) / sigma ** s for s in s_list)
    K = max(
        sigma * u0_supnorm / eps ** sigma,
        (2 * N1) ** (1 / (s_min - p + 1)) * total ** (-1 / (s_min - p + 1)),
        2 * sigma * eps ** (-p / (p - 1)),
    )
    return BarrierV4(p=p, N1=N1, R_prime=R_prime, eps=eps, x0=tuple(x0), q_list=q_list, s_list=s_list, K=K)


# ---------------------------------------------------------------------------
# Closed-form residuals


def residual_Mp_v1(b: BarrierV1, R):
    """w_t - L_p w + w^q - |grad_H w|^r at V1."""
    R = _check_R(R, b.eps, b.R_prime)
    p, q, r, s, K = b.p, b.q, b.r, b.sigma, b.K
    e = np.exp((p - 1) * s * R)
    return (
        -(p - 1) * s ** p * K ** (p - 1) * e
        - (b.N1 - 1) / R * s ** (p - 1) * K ** (p - 1) * e
        + K ** q * np.exp(q * s * R)
        - K ** r * s ** r * np.exp(r * s * R)
    )


def residual_Np_v2(b: BarrierV2, R):
    """w_t - L_p w - w^q + |grad_H w|^r at V2."""
    R = _check_R(R, b.eps, b.R_prime)
    p = b.p
    return -b.N1 * b.K ** (p - 1) + b.K ** b.r * R ** (b.r / (p - 1)) - (b.K / b.sigma) ** b.q * R ** (b.q * p / (p - 1))


def residual_Np_v3(b: BarrierV3, R):
    """w_t - L_p w - w^r + |grad_H w|^r at V3 (the q = r case)."""
    R = _check_R(R, b.eps, b.R_prime)
    s, K, r = b.sigma, b.K, b.r
    return -b.sublaplacian(R) - (K * R ** s) ** r + (K * s * R ** (s - 1)) ** r


def residual_Kp_v4(b: BarrierV4, R):
    """w_t - L_p w - sum w^q_i + sum w^s_i at V4."""
    R = _check_R(R, b.eps, b.R_prime)
    z = b.K / b.sigma * R ** b.sigma
    out = -b.N1 * b.K ** (b.p - 1) + np.zeros_like(R)
    for q in b.q_list:
        out = out - z ** q
    for s in b.s_list:
        out = out + z ** s
    return out


RESIDUALS = {
    BarrierV1: residual_Mp_v1,
    BarrierV2: residual_Np_v2,
    BarrierV3: residual_Np_v3,
    BarrierV4: residual_Kp_v4,
}


# ---------------------------------------------------------------------------
# Blow-up profile


@dataclass
class BlowupProfile:
    p: float
    q: float
    N1: int
    k1: float
    k2: float
    A: float
    delta: float
    t0: float
    ladder_rung: int
    r: float | None = None
    s: float | None = None

    @property
    def sigma(self) -> float:
        return self.p / (self.p - 1)

    @property
    def R1(self) -> float:
        return (self.A ** (self.sigma - 1) * (self.A + self.sigma)) ** (1 / self.sigma)

    @property
    def t_star(self) -> float:
        return 1.0 / self.delta

    def F(self, y):
        y = np.asarray(y, dtype=float)
        return 1 + self.A / self.sigma - y ** self.sigma / (self.sigma * self.A ** (self.sigma - 1))

    def dF(self, y):
        return -(np.asarray(y, dtype=float) / self.A) ** (self.sigma - 1)

    def support_radius(self, t):
        return self.R1 * (1 - self.delta * np.asarray(t, dtype=float)) ** self.k2

    def value(self, t, rho):
        tau = 1 - self.delta * np.asarray(t, dtype=float)
        return tau ** (-self.k1) * self.F(np.asarray(rho, dtype=float) / tau ** self.k2)

    def field(self, group: GroupSpec, grid: Grid, t: float) -> np.ndarray:
        return self.value(t, first_stratum_radius(group, grid))

    def _exponents(self):
        p, k1, k2 = self.p, self.k1, self.k2
        diffusion = 1 - 2 * k2 - (p - 2) * (k1 + k2)
        if self.r is not None:
            forcing = k1 + 1 - self.r * (k1 + k2)
        else:
            forcing = k1 + 1 - self.s * k1
        return diffusion, forcing

    def bound_inner(self, t0):
        """Upper bound of tau^(k1+1) N_p v on 0 <= y <= A, for t >= t0."""
        tau0 = 1 - self.delta * t0
        e_d, e_f = self._exponents()
        forcing = 1.0 if self.r is not None else (1 + self.A / self.sigma) ** self.s
        return (self.delta * self.k1 * (1 + self.A / self.sigma) - 1
                + self.N1 / self.A * tau0 ** e_d + forcing * tau0 ** e_f)

    def bound_outer(self, t0):
        """Upper bound of tau^(k1+1) N_p v on A <= y <= R1, for t >= t0."""
        tau0 = 1 - self.delta * t0
        e_d, e_f = self._exponents()
        if self.r is not None:
            forcing = (self.R1 / self.A) ** (self.r * (self.sigma - 1))
        else:
            forcing = 1.0
        return self.delta * (self.k1 - self.k2 * self.A) + self.N1 / self.A * tau0 ** e_d + forcing * tau0 ** e_f

    def floor(self, group: GroupSpec, grid: Grid) -> np.ndarray:
        """Pointwise lower bound u0 must respect: v(t0, .)."""
        return self.field(group, grid, self.t0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(sigma=self.sigma, R1=self.R1, t_star=self.t_star, blowup_time_bound=self.t_star - self.t0)
        return d


LADDER_MAX = 40


def ladder_time(delta: float, m: int) -> float:
    return (1.0 / delta) * (1 - 2.0 ** (-m))


def blowup_profile(p, q, r=None, N1=2, s=None) -> BlowupProfile:
    """Pin the free parameters of the self-similar sub-solution.

    Give ``r`` for the gradient-absorption problem (alpha=1, beta=-1) or
    ``s`` for the power-absorption problem (alpha=1, gamma=-1). k2 is the
    midpoint of its admissible interval, A = 2 k1/k2, delta is half its
    upper bound and t0 is the first rung of t = (1/delta)(1 - 2^-m) at which
    both residual bounds are nonpositive.
    """
    if (r is None) == (s is None):
        raise RegimeError("give exactly one of r (gradient term) or s (absorption term)")
    if not p > 1:
        raise RegimeError(f"p must exceed 1, got {p}")
    if r is not None:
        if not (r > 0 and q > max(p - 1, r, 1)):
            raise RegimeError(f"need r > 0 and q > max(p-1, r, 1); got p={p}, q={q}, r={r}")
    elif not (s > 0 and q > max(s, p - 1, 1)):
        raise RegimeError(f"need s > 0 and q > max(s, p-1, 1); got p={p}, q={q}, s={s}")
    sigma = p / (p - 1)
    k1 = 1 / (q - 1)
    upper = (q - p + 1) / (p * (q - 1))
    if r is not None:
        upper = min(upper, (q - r) / (r * (q - 1)))
    k2 = upper / 2
    A = 2 * k1 / k2
    delta = 0.5 / (k1 * (1 + A / sigma))
    prof = BlowupProfile(p=p, q=q, N1=N1, k1=k1, k2=k2, A=A, delta=delta, t0=0.0, ladder_rung=0, r=r, s=s)

    def ok(m):
        t = ladder_time(delta, m)
        return prof.bound_inner(t) <= 0 and prof.bound_outer(t) <= 0

    if not ok(LADDER_MAX):
        raise RegimeError(f"no admissible t0 on the ladder up to m={LADDER_MAX}")
    lo, hi = 0, LADDER_MAX  # ok(hi) holds; ok(lo) treated as false
    if ok(1):
        hi = 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    prof.ladder_rung = hi
    prof.t0 = ladder_time(delta, hi)
    return prof


def with_rung(prof: BlowupProfile, m: int) -> BlowupProfile:
    """Same profile with t0 moved to ladder rung ``m`` (must not precede the certified rung)."""
    if m < prof.ladder_rung:
        raise RegimeError(f"rung {m} precedes the certified rung {prof.ladder_rung}")
    d = {k: getattr(prof, k) for k in ("p", "q", "N1", "k1", "k2", "A", "delta", "r", "s")}
    return BlowupProfile(t0=ladder_time(prof.delta, m), ladder_rung=m, **d)


def residual_Np_profile(prof: BlowupProfile, t, y, N1: int | None = None):
    """v_t - L_p v - v^q + |grad_H v|^r (or + v^s) at the profile, in (t, y) variables."""
    N1 = prof.N1 if N1 is None else N1
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(t < prof.t0) or np.any(t >= prof.t_star):
        raise ValueError(f"t must lie in [{prof.t0:g}, {prof.t_star:g})")
    if np.any(y <= 0) or np.any(y >= prof.R1):
        raise ValueError(f"y must lie in (0, {prof.R1:g})")
    p, q, k1, k2, delta = prof.p, prof.q, prof.k1, prof.k2, prof.delta
    tau = 1 - delta * t
    F, dF = prof.F(y), prof.dF(y)
    # (|F'|^(p-2) F')' + (N1-1)/y |F'|^(p-2) F' = -N1/A on (0, R1)
    radial = -N1 / prof.A
    out = (
        delta * (k1 * F + k2 * y * dF) / tau ** (k1 + 1)
        - radial / tau ** ((p - 2) * (k1 + k2) + k1 + 2 * k2)
        - F ** q / tau ** (q * k1)
    )
    if prof.r is not None:
        out = out + np.abs(dF) ** prof.r / tau ** (prof.r * (k1 + k2))
    else:
        out = out + F ** prof.s / tau ** (prof.s * k1)
    return out


# ---------------------------------------------------------------------------
# Sign certification


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    closed_lo: bool = True
    closed_hi: bool = False

    def sample(self, n: int) -> np.ndarray:
        if n < 2:
            raise ValueError("need at least 2 samples per axis")
        if self.closed_lo and self.closed_hi:
            return np.linspace(self.lo, self.hi, n)
        if self.closed_lo:
            return self.lo + (self.hi - self.lo) * np.arange(n) / n
        if self.closed_hi:
            return self.lo + (self.hi - self.lo) * np.arange(1, n + 1) / n
        return self.lo + (self.hi - self.lo) * np.arange(1, n + 1) / (n + 1)


LOW_RESOLUTION = 64


@dataclass
class Certificate:
    name: str
    expected_sign: str
    passed: bool
    min: float
    max: float
    worst_location: tuple[float, ...]
    worst_value: float
    samples: int
    low_resolution: bool
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def certify_sign(residual: Callable, region: Sequence[Interval], expected_sign: str, samples: int = 256,
                 name: str = "residual", params: dict | None = None) -> Certificate:
    """Evaluate ``residual`` on a tensor sample of ``region`` and check its sign.

    ``expected_sign`` is ``">=0"`` or ``"<=0"``; the comparison uses zero
    tolerance.  The worst sample (smallest for ">=0", largest for "<=0") is
    reported with its location.
    """
    if expected_sign not in (">=0", "<=0"):
        raise ValueError(f"expected_sign must be '>=0' or '<=0', got {expected_sign!r}")
    axes = [iv.sample(samples) for iv in region]
    mesh = np.meshgrid(*axes, indexing="ij")
    with np.errstate(over="ignore", invalid="ignore"):
        vals = np.asarray(residual(*mesh), dtype=float)
    vals = np.broadcast_to(vals, mesh[0].shape)
    finite = np.isfinite(vals).all()
    lo, hi = float(np.min(vals)), float(np.max(vals))
    if expected_sign == ">=0":
        idx = np.unravel_index(np.argmin(vals), vals.shape)
        passed = finite and lo >= 0
    else:
        idx = np.unravel_index(np.argmax(vals), vals.shape)
        passed = finite and hi <= 0
    where = tuple(float(m[idx]) for m in mesh)
    return Certificate(name, expected_sign, bool(passed), lo, hi, where, float(vals[idx]),
                       samples, samples < LOW_RESOLUTION, dict(params or {}))


def certify_barrier(b, samples: int = 256) -> Certificate:
    """Certify residual >= 0 over R in [eps, R'+1)."""
    residual = RESIDUALS[type(b)]
    return certify_sign(lambda R: residual(b, R), [Interval(b.eps, b.R_prime + 1)], ">=0", samples,
                        name=f"{type(b).__name__}:{residual.__name__}", params=b.to_dict())


def certify_profile(prof: BlowupProfile, samples: int = 64) -> Certificate:
    """Certify N_p v <= 0 over [t0, 1/delta) x (0, R1)."""
    region = [Interval(prof.t0, prof.t_star), Interval(0.0, prof.R1, closed_lo=False)]
    return certify_sign(lambda t, y: residual_Np_profile(prof, t, y), region, "<=0", samples,
                        name="BlowupProfile:residual_Np_profile", params=prof.to_dict())
