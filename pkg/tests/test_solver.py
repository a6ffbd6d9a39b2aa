import math

import numpy as np
import pytest

from psublap import barriers as bar
from psublap.geometry import Grid, apply_dirichlet, make_euclidean
from psublap.harness import default_u0
from psublap.solver import (
    Outcome,
    ProblemError,
    ProblemSpec,
    SolverConfig,
    cfl_dt,
    energy_y,
    p_sublaplacian,
    reaction_rhs,
    solve,
    step,
)

E2 = make_euclidean(2)


def bump(n=17):
    g = Grid.box(2, n)
    return g, default_u0(E2, g)


# -- operator ---------------------------------------------------------------


def test_laplacian_of_quadratic_is_four():
    g = Grid.box(2, 17)
    x, y = g.coords()
    L = p_sublaplacian(E2, g, x ** 2 + y ** 2, 2.0, eps_reg=0.0)
    np.testing.assert_allclose(L[2:-2, 2:-2], 4.0, atol=1e-10)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_zero_field_gives_zero(p):
    g = Grid.box(2, 9)
    assert np.all(p_sublaplacian(E2, g, g.zeros(), p) == 0)


def test_p_must_exceed_one():
    g = Grid.box(2, 9)
    with pytest.raises(ValueError):
        p_sublaplacian(E2, g, g.zeros(), 1.0)


def _barrier_errors(make, ns=(17, 33, 65)):
    # nodes two or more away from the faces; the layer next to a face mixes in
    # one-sided gradients and is first order only
    errs = []
    for n in ns:
        g = Grid.box(2, n)
        geo = bar.barrier_geometry(E2, g)
        b = make(geo)
        R = bar.first_stratum_radius(E2, g, geo.x0)
        exact = b.sublaplacian(R)
        rel = np.abs(p_sublaplacian(E2, g, b.field(E2, g), b.p) - exact) / np.abs(exact)
        errs.append(rel[2:-2, 2:-2].max())
    return np.array(errs)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_v1_operator_converges(p):
    errs = _barrier_errors(lambda geo: bar.BarrierV1(p=p, N1=2, R_prime=geo.R_prime, eps=geo.eps, x0=geo.x0,
                                                    q=3.0, r=1.5, K=2.0, sigma=1.2))
    orders = np.log2(errs[:-1] / errs[1:])
    assert orders.min() >= 1.0


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_v2_and_v4_operator_converge(p):
    for make in (
        lambda geo: bar.BarrierV2(p=p, N1=2, R_prime=geo.R_prime, eps=geo.eps, x0=geo.x0, q=1.0, r=2.0, K=3.0),
        lambda geo: bar.BarrierV4(p=p, N1=2, R_prime=geo.R_prime, eps=geo.eps, x0=geo.x0,
                                  q_list=(3.0,), s_list=(2.0,), K=3.0),
    ):
        errs = _barrier_errors(make)
        assert np.log2(errs[:-1] / errs[1:]).min() >= 0.9 and errs[-1] < 0.02


# -- reaction terms ----------------------------------------------------------


def _problem(g, **kw):
    return ProblemSpec(E2, g, g.zeros(), **kw)


def test_reaction_rhs_examples():
    g = Grid.box(2, 5)
    u = np.full(g.extents, 2.0)
    zero = [g.zeros(), g.zeros()]
    assert np.all(reaction_rhs(_problem(g, alpha=1, q_list=[3]), u, zero) == 8)
    grad = [np.full(g.extents, 2.0), g.zeros()]
    out = reaction_rhs(_problem(g, alpha=1, beta=-1, q_list=[2], r_list=[1]), np.ones(g.extents), grad)
    assert np.all(out == -1)
    out = reaction_rhs(_problem(g, gamma=-1, s_list=[0.5]), g.zeros(), zero)
    assert np.all(out == 0)


def test_reaction_rhs_rejects_nonfinite():
    g = Grid.box(2, 5)
    u = g.zeros()
    u[2, 2] = np.nan
    with pytest.raises(FloatingPointError):
        reaction_rhs(_problem(g), u, [g.zeros(), g.zeros()])


# -- step size --------------------------------------------------------------


def test_cfl_linear_heat():
    g = Grid.box(2, 17)
    cfg = SolverConfig(eps_reg=1e-8, cfl=0.5)
    dt = cfl_dt(_problem(g), default_u0(E2, g), cfg)
    assert dt == pytest.approx(0.5 * g.h ** 2 / 4)


def test_cfl_degenerate_flux_at_zero():
    # p > 2 includes the (p - 1) factor of the linearised flux
    g = Grid.box(2, 17)
    cfg = SolverConfig(eps_reg=1e-2, cfl=0.5)
    p = 3.0
    dt = cfl_dt(_problem(g, p=p), g.zeros(), cfg)
    assert dt == pytest.approx(0.5 * g.h ** 2 / (4 * (p - 1) * 1e-2 ** ((p - 2) / 2)))


def test_cfl_saturates_at_min_dt():
    g = Grid.box(2, 17)
    cfg = SolverConfig(min_dt=1e-12)
    u = apply_dirichlet(g, np.full(g.extents, 1e9))
    assert cfl_dt(_problem(g, alpha=1, q_list=[3]), u, cfg) == cfg.min_dt


# -- stepping ----------------------------------------------------------------


def test_step_zero_is_steady():
    g = Grid.box(2, 9)
    cfg = SolverConfig()
    out = step(_problem(g, alpha=-1, q_list=[2]), g.zeros(), 1e-3, cfg)
    assert np.all(out == 0)


def test_step_dt_zero_is_identity():
    g, u = bump()
    np.testing.assert_array_equal(step(_problem(g), u, 0.0, SolverConfig()), u)


def test_discrete_maximum_principle(rng):
    g = Grid.box(2, 17)
    cfg = SolverConfig(eps_reg=0.0 + 1e-8)
    prob = _problem(g)
    for _ in range(20):
        u = apply_dirichlet(g, rng.random(g.extents))
        dt = g.h ** 2 / 4 * rng.random()
        assert step(prob, u, dt, cfg).max() <= u.max() + 1e-14


# -- energy -----------------------------------------------------------------


def test_energy_examples():
    g = Grid((0.0, 0.0), (1.0, 1.0), (17, 17))
    w = g.quadrature_weights()
    assert energy_y(g.zeros(), 1.0, w) == 0
    assert energy_y(np.ones(g.extents), 1.0, w) == pytest.approx(0.5, rel=1e-14)
    assert energy_y(np.full(g.extents, 2.0), 3.0, w) == pytest.approx(4.0, rel=1e-14)
    assert energy_y(np.ones(g.extents), 3.0, w) == pytest.approx(0.25, rel=1e-14)


def test_energy_rejects_negative_and_bad_kappa():
    with pytest.raises(ValueError):
        energy_y(np.array([-1.0, 1.0]), 1.0)
    with pytest.raises(ValueError):
        energy_y(np.ones(3), 0.0)


# -- validation ----------------------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [
        dict(p=1.0),
        dict(alpha=1.0),
        dict(alpha=1.0, q_list=[0.5]),
        dict(beta=1.0, r_list=[1.0]),
        dict(gamma=1.0, s_list=[0.9]),
        dict(alpha=-1.0, q_list=[-1.0]),
    ],
)
def test_problem_invariants(kw):
    g, u = bump(9)
    with pytest.raises(ProblemError):
        ProblemSpec(E2, g, u, **kw).validate()


def test_u0_invariants():
    g, u = bump(9)
    with pytest.raises(ProblemError):
        ProblemSpec(E2, g, -u).validate()
    v = u.copy()
    v[0, 0] = 1.0
    with pytest.raises(ProblemError):
        ProblemSpec(E2, g, v).validate()
    with pytest.raises(ProblemError):
        ProblemSpec(E2, g, u[:-1]).validate()


def test_solver_config_invariants():
    for kw in (dict(cfl=1.0), dict(t_end=0.0), dict(trace_stride=0), dict(min_dt=-1.0)):
        with pytest.raises(ProblemError):
            SolverConfig(**kw).validate()


# -- whole solves ---------------------------------------------------------------


def test_heat_decay_completes_monotone():
    g, u = bump()
    tr = solve(ProblemSpec(E2, g, u), SolverConfig(t_end=0.2))
    assert tr.outcome is Outcome.COMPLETED
    assert np.all(np.diff(tr.sup_norm) <= 1e-15)
    assert np.all(np.diff(tr.times) > 0)
    assert tr.times[-1] == pytest.approx(0.2)


def test_first_eigenmode_decay():
    g = Grid.box(2, 33)
    T = 1 / (2 * math.pi ** 2)  # one e-folding of cos(pi x) cos(pi y)
    tr = solve(ProblemSpec(E2, g, default_u0(E2, g)), SolverConfig(t_end=T))
    assert tr.sup_norm[-1] == pytest.approx(math.exp(-1), rel=0.01)


def test_trace_stride_keeps_last_sample():
    g, u = bump()
    tr = solve(ProblemSpec(E2, g, u), SolverConfig(t_end=0.05, trace_stride=7), keep_fields=True)
    assert len(tr.times) == len(tr.fields) == len(tr.dt)
    assert tr.times[-1] == pytest.approx(0.05)
    assert np.array_equal(tr.fields[-1], tr.final)


def test_blowup_reported_at_threshold():
    g, u = bump()
    tr = solve(ProblemSpec(E2, g, 50 * u, alpha=1, q_list=[3]), SolverConfig(t_end=1.0, u_max=1e4))
    assert tr.outcome is Outcome.BLOWUP
    assert tr.sup_norm[-1] >= 1e4
    assert tr.blowup_time == tr.times[-1]


def test_blowup_time_monotone_in_initial_scale():
    g, u = bump()
    times = []
    for c in (20.0, 40.0, 80.0):
        tr = solve(ProblemSpec(E2, g, c * u, alpha=1, beta=-1, q_list=[3], r_list=[1.5]), SolverConfig(t_end=1.0))
        assert tr.outcome is Outcome.BLOWUP
        times.append(tr.blowup_time)
    assert times[0] >= times[1] >= times[2]


def test_energy_recorded_when_kappa_given():
    g, u = bump()
    tr = solve(ProblemSpec(E2, g, u), SolverConfig(t_end=0.01), kappa=3.0)
    assert tr.energy[0] == pytest.approx(energy_y(u, 3.0, g.quadrature_weights()))
    assert np.all(np.isfinite(tr.energy))
    tr = solve(ProblemSpec(E2, g, u), SolverConfig(t_end=0.01))
    assert np.all(np.isnan(tr.energy))
