import numpy as np
import pytest

from conftest import rand_sym
from graphon_sgd.kernels import SymMatrix
from graphon_sgd.objectives import (DiffusionSpec, HomTerm, ObjectiveSpec,
                                    SimpleGraph, eval_values, phi_values)
from graphon_sgd.reflect import StepSchedule, reflected_euler
from graphon_sgd.sgd import (OutOfHorizon, active_set, coupled_run,
                             coupling_experiment, interpolate, pgd_run,
                             pnsgd_run, zero_noise_flow)

TRI = ObjectiveSpec((HomTerm(SimpleGraph.triangle(), 0.05), HomTerm(SimpleGraph.edge(), 0.1)))


def test_three_integrators_agree_bitwise(rng):
    A = SymMatrix(rand_sym(rng, 5, -0.9, 0.9))
    sched = StepSchedule.geometric(0.2, 0.995, 3.0)
    a = pgd_run(TRI, A, sched).values()
    b = pnsgd_run(TRI, DiffusionSpec(0.0), A, sched, exact_gradient=True).values()
    c = reflected_euler(TRI, DiffusionSpec(0.0), A, sched).values()
    assert np.array_equal(a, b) and np.array_equal(a, c)


def test_edge_only_scalar_recursion(rng):
    # with only an edge term every entry moves by the same amount: w * (mean - c)
    w, c, tau, K = 2.0, 0.1, 0.05, 40
    spec = ObjectiveSpec((HomTerm(SimpleGraph.edge(), c, w),))
    a = rand_sym(rng, 6, -0.3, 0.3)
    tr = pgd_run(spec, SymMatrix(a), StepSchedule.constant(tau, K * tau))
    m0 = a.mean()
    shift = (m0 - c) * (1 - (1 - tau * w) ** K)
    assert np.allclose(tr.states[-1].values, a - shift, atol=1e-13)


def test_pnsgd_mean_tracks_pgd(rng):
    A = SymMatrix(rand_sym(rng, 4, -0.4, 0.4))
    sched = StepSchedule.constant(0.01, 0.5)
    target = pgd_run(TRI, A, sched).states[-1].values
    draws = np.stack([pnsgd_run(TRI, DiffusionSpec(0.1), A, sched, rng=s).states[-1].values
                      for s in range(500)])
    se = draws.std(axis=0, ddof=1) / np.sqrt(500)
    assert np.all(np.abs(draws.mean(axis=0) - target) <= 3 * se)


def test_pnsgd_reproducible_and_stays_in_box(rng):
    A = SymMatrix(rand_sym(rng, 5))
    sched = StepSchedule.constant(0.1, 2.0)
    t1 = pnsgd_run(TRI, DiffusionSpec(1.0), A, sched, rng=9)
    t2 = pnsgd_run(TRI, DiffusionSpec(1.0), A, sched, rng=9)
    assert np.array_equal(t1.values(), t2.values())
    v = t1.values()
    assert v.min() >= -1 and v.max() <= 1
    assert np.array_equal(v, np.swapaxes(v, 1, 2))


def test_permutation_equivariance(rng):
    a = rand_sym(rng, 5, -0.5, 0.5)
    p = rng.permutation(5)
    sched = StepSchedule.constant(0.05, 1.0)
    X = pnsgd_run(TRI, DiffusionSpec(0.3), SymMatrix(a), sched, rng=3).states[-1].values
    Y = pnsgd_run(TRI, DiffusionSpec(0.3), SymMatrix(a[np.ix_(p, p)]), sched, rng=3,
                  labels=p).states[-1].values
    assert np.allclose(Y, X[np.ix_(p, p)], atol=1e-13)


def test_interpolate(rng):
    A = SymMatrix(rand_sym(rng, 3))
    tr = pgd_run(TRI, A, StepSchedule.constant(0.25, 1.0))
    assert interpolate(tr, 0.0) is tr.states[0]
    assert interpolate(tr, 0.3) is tr.states[1]
    assert interpolate(tr, 0.5) is tr.states[2]
    assert interpolate(tr, 1.0) is tr.states[-1]
    with pytest.raises(OutOfHorizon):
        interpolate(tr, 1.5)


def test_coupling_exact_gradient_without_noise(rng):
    A = SymMatrix(rand_sym(rng, 4))
    sched = StepSchedule.constant(0.1, 1.0)
    run = coupled_run(TRI, DiffusionSpec(0.0), A, sched, fine_factor=1, exact_gradient=True)
    assert run.sup_err == 0.0
    run4 = coupled_run(TRI, DiffusionSpec(0.0), A, sched, fine_factor=4, exact_gradient=True)
    assert 0 < run4.sup_err < 0.05
    assert len(run4.sup_err_series) == 41


def test_coupling_zero_horizon(rng):
    A = SymMatrix(rand_sym(rng, 3))
    run = coupled_run(TRI, DiffusionSpec(0.5), A, StepSchedule.constant(0.1, 0.0), 4)
    assert run.sup_err == 0.0


def test_coupling_error_shrinks_with_tau(rng):
    A = SymMatrix(rand_sym(rng, 4, -0.5, 0.5))
    tab = coupling_experiment(TRI, DiffusionSpec(0.2), A, [0.04, 0.01], 0.4, reps=20, fine_factor=2)
    assert tab.mean[1] < tab.mean[0]
    assert len(tab.rows) == 40
    with pytest.raises(ValueError):
        coupling_experiment(TRI, DiffusionSpec(0.2), A, [0.04, 0.03], 0.4, reps=1)


def test_active_set_cases():
    spec = ObjectiveSpec((HomTerm(SimpleGraph.edge(), 0.0),))
    # mean > 0: phi > 0, descent points down; upper-boundary entries may move
    v = np.array([[1.0, 0.2], [0.2, -1.0]])
    act = active_set(SymMatrix(v), spec)
    assert act[0, 0] and act[0, 1] and not act[1, 1]
    spec2 = ObjectiveSpec((HomTerm(SimpleGraph.edge(), 0.9),))
    act2 = active_set(SymMatrix(v), spec2)
    assert not act2[0, 0] and act2[0, 1] and act2[1, 1]


def test_zero_noise_flow_monotone_and_methods_agree(rng):
    A = SymMatrix(rand_sym(rng, 5))
    a = zero_noise_flow(TRI, A, 1e-2, 3.0)
    b = zero_noise_flow(TRI, A, 1e-2, 3.0, method="reflected")
    assert np.allclose(a.values(), b.values(), atol=1e-12)
    R = [eval_values(S.values, TRI) for S in a.states]
    assert np.all(np.diff(R) <= 1e-12)
    # bookkeeping identity on the grid
    v = a.values()
    drift = np.cumsum([-0.01 * phi_values(x, TRI) for x in v[:-1]], axis=0)
    assert np.allclose(v[1:], v[0] + drift + a.l_lower[1:] - a.l_upper[1:], atol=1e-12)
    with pytest.raises(ValueError):
        zero_noise_flow(TRI, A, 1e-2, 1.0, method="other")


def test_zero_noise_flow_fixed_point_and_contraction():
    spec = ObjectiveSpec((HomTerm(SimpleGraph.edge(), 0.3),))
    fixed = SymMatrix(np.full((3, 3), 0.3))
    tr = zero_noise_flow(spec, fixed, 0.1, 1.0)
    assert all(np.array_equal(S.values, fixed.values) for S in tr.states)
    start = SymMatrix(np.full((3, 3), 0.9))
    tr = zero_noise_flow(spec, start, 0.01, 10.0)
    gap0 = eval_values(start.values, spec)
    assert eval_values(tr.states[-1].values, spec) < 1e-6 * gap0
