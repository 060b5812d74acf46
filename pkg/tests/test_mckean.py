import itertools
import math

import numpy as np
import pytest

from graphon_sgd.kernels import StepKernel, SymMatrix, restrict_Mn
from graphon_sgd.mckean import (DriftSpec, GraphonFlow, NoConvergence,
                                boundary_effect, boundary_flux,
                                chaos_diagnostic, injective_density, load_flow,
                                picard_iterate, sampled_array_check,
                                save_flow, solve_gamma)
from graphon_sgd.objectives import (DiffusionSpec, HomTerm, ObjectiveSpec,
                                    SimpleGraph, hom_density)
from graphon_sgd.sgd import zero_noise_flow

TIMES = np.linspace(0, 0.5, 9)
ZERO = ObjectiveSpec()


def flow_of(values, box=(-1.0, 1.0), times=TIMES):
    return GraphonFlow.constant(StepKernel(np.asarray(values, dtype=float), box), times)


def lin_kernel(m, slope=0.8, offset=-0.8):
    x = (np.arange(m) + 0.5) / m
    return StepKernel(offset + slope * (x[:, None] + x[None, :]), (-1.0, 1.0))


def test_frozen_without_drift_or_noise(rng):
    v = rng.uniform(-1, 1, (3, 3))
    v = np.triu(v) + np.triu(v, 1).T
    g = flow_of(v)
    out = picard_iterate(g, DriftSpec.gradient(ZERO), DiffusionSpec(0.0), inner_dt=1 / 64)
    assert np.array_equal(out.values(), g.values())


def test_symmetric_noise_keeps_mean_zero():
    g = flow_of(np.zeros((3, 3)))
    out = picard_iterate(g, DriftSpec.general("zero"), DiffusionSpec(0.6), mc_reps=2000,
                         inner_dt=1 / 64, rng=2)
    v, se = out.values(), out.stderr
    assert np.all(np.abs(v[1:]) <= 3 * se[1:] + 1e-15)
    assert np.array_equal(v, np.swapaxes(v, 1, 2))


def test_entropy_fixed_point():
    spec = ObjectiveSpec(entropy_weight=1.0, box=(0.0, 1.0))
    W0 = StepKernel(np.full((2, 2), 0.5), (0.0, 1.0))
    g = GraphonFlow.constant(W0, TIMES)
    out = picard_iterate(g, DriftSpec.gradient(spec), DiffusionSpec(0.2), mc_reps=1000, inner_dt=1 / 64)
    assert np.all(np.abs(out.values() - 0.5) <= 4 * out.stderr + 1e-15)
    flow, d = solve_gamma(W0, DriftSpec.gradient(spec), DiffusionSpec(0.0), 0.5, m=2, out_steps=4,
                          inner_dt=1 / 64)
    assert d == [0.0] and np.all(flow.values() == 0.5)


def test_general_drift_pull():
    # dz = -(z - w) dt with w frozen at the start value: nothing moves
    g = flow_of(np.full((2, 2), 0.3))
    out = picard_iterate(g, DriftSpec.general("kernel_pull", rate=2.0), DiffusionSpec(0.0), inner_dt=1 / 64)
    assert np.allclose(out.values(), 0.3)
    c = picard_iterate(g, DriftSpec.general("constant", c=0.5), DiffusionSpec(0.0), inner_dt=1 / 64)
    assert np.allclose(c.values()[:, 0, 0], np.minimum(0.3 + 0.5 * TIMES, 1.0))
    with pytest.raises(ValueError):
        DriftSpec.general("nope")


def test_zero_noise_matches_flow():
    spec = ObjectiveSpec((HomTerm(SimpleGraph.edge(), 0.2), HomTerm(SimpleGraph.triangle(), 0.0)))
    W0 = lin_kernel(4)
    dt = 0.5 / 128
    flow, dists = solve_gamma(W0, DriftSpec.gradient(spec), DiffusionSpec(0.0), 0.5, m=4, out_steps=8,
                              inner_dt=dt, max_iters=40)
    ref = zero_noise_flow(spec, restrict_Mn(W0, 4), dt, 0.5, method="reflected")
    assert np.allclose(flow.values(), ref.values()[::16], atol=1e-9)
    ind = zero_noise_flow(spec, restrict_Mn(W0, 4), dt, 0.5)
    assert np.abs(flow.values() - ind.values()[::16]).max() <= 10 * dt
    assert dists[-1] < 1e-10


def test_variance_scales_inverse_with_reps():
    g = flow_of(np.zeros((4, 4)))
    drift = DriftSpec.general("zero")
    sizes = [100, 200, 400, 800]
    var = []
    for reps in sizes:
        outs = np.stack([picard_iterate(g, drift, DiffusionSpec(0.5), reps, 1 / 32, rng=s).values()[-1]
                         for s in range(40)])
        iu = np.triu_indices(4)
        var.append(outs[:, iu[0], iu[1]].var(axis=0, ddof=1).mean())
    slope = np.polyfit(np.log(sizes), np.log(var), 1)[0]
    assert abs(slope + 1) <= 0.2


def test_reproducible_and_thread_invariant():
    spec = ObjectiveSpec((HomTerm(SimpleGraph.edge(), 0.2),))
    g = GraphonFlow.constant(lin_kernel(8), TIMES)
    drift = DriftSpec.gradient(spec)
    a = picard_iterate(g, drift, DiffusionSpec(0.3), 50, 1 / 32, rng=5)
    b = picard_iterate(g, drift, DiffusionSpec(0.3), 50, 1 / 32, rng=5)
    c = picard_iterate(g, drift, DiffusionSpec(0.3), 50, 1 / 32, rng=5, threads=3)
    assert np.array_equal(a.values(), b.values()) and np.array_equal(a.values(), c.values())
    assert a.values().min() >= -1 and a.values().max() <= 1


def test_save_load_flow(tmp_path):
    g = picard_iterate(flow_of(np.full((2, 2), 0.1)), DriftSpec.general("zero"), DiffusionSpec(0.4),
                       20, 1 / 32)
    g.meta["note"] = "x"
    save_flow(g, tmp_path / "f")
    back = load_flow(tmp_path / "f")
    assert np.array_equal(back.values(), g.values())
    assert np.array_equal(back.times, g.times) and back.meta["note"] == "x"


def test_no_convergence_carries_distances():
    with pytest.raises(NoConvergence) as e:
        solve_gamma(lin_kernel(2), DriftSpec.gradient(ObjectiveSpec((HomTerm(SimpleGraph.edge(), 0.5),))),
                    DiffusionSpec(0.3), 0.5, m=2, out_steps=4, mc_reps=50, inner_dt=1 / 64, tol=1e-12,
                    max_iters=2)
    assert len(e.value.distances) == 2 and e.value.flow is not None


def test_chaos_zero_noise_same_grid():
    spec = ObjectiveSpec((HomTerm(SimpleGraph.edge(), 0.2),))
    W0 = lin_kernel(4)
    flow, _ = solve_gamma(W0, DriftSpec.gradient(spec), DiffusionSpec(0.0), 0.5, m=4, out_steps=4,
                          inner_dt=1 / 64, max_iters=40)
    rows = chaos_diagnostic(spec, DiffusionSpec(0.0), flow, [4], reps=2, dt=1 / 64, W0=W0)
    assert rows[0].median < 1e-9 and rows[0].sandwich_violations == 0


def _brute_injective(F, A):
    k = A.shape[0]
    tot, cnt = 0.0, 0
    for phi in itertools.permutations(range(k), F.k):
        tot += math.prod(A[phi[a], phi[b]] for a, b in F.edges)
        cnt += 1
    return tot / cnt


@pytest.mark.parametrize("F", [SimpleGraph.edge(), SimpleGraph.triangle(), SimpleGraph.cycle(4),
                               SimpleGraph.path(3)])
def test_injective_density_brute_force(F, rng):
    A = rng.uniform(-1, 1, (5, 5))
    A = np.triu(A) + np.triu(A, 1).T
    assert injective_density(F, A) == pytest.approx(_brute_injective(F, A), abs=1e-12)


def test_sampled_array_checks():
    W = StepKernel(np.full((3, 3), 0.4), (0.0, 1.0))
    rows = sampled_array_check(W, SimpleGraph.triangle(), [5, 10], 5)
    assert all(r["mean_abs_dev"] < 1e-12 for r in rows)
    V = lin_kernel(4)
    row = sampled_array_check(V, SimpleGraph.edge(), [2], 1, rng=3)[0]
    from graphon_sgd.kernels import sample_matrix
    from graphon_sgd.streams import as_stream
    A, _ = sample_matrix(V, 2, as_stream(3).child("sample", 2, 0))
    assert row["mean_abs_dev"] == pytest.approx(abs(A.values[0, 1] - hom_density(SimpleGraph.edge(), V)))
    devs = [r["mean_abs_dev"] for r in sampled_array_check(V, SimpleGraph.triangle(), [10, 40], 40)]
    assert devs[1] < devs[0]


def test_flux_zero_start_no_drift():
    g = flow_of(np.zeros((2, 2)), times=np.linspace(0, 1, 9))
    drift = DriftSpec.gradient(ZERO)
    gamma = picard_iterate(g, drift, DiffusionSpec(0.3), 4000, 1 / 64)
    fs = boundary_flux(gamma, drift, DiffusionSpec(0.3), (0, 1), mc_reps=4000, inner_dt=1 / 64)
    assert np.all(fs.minus_phi == 0) and np.abs(fs.lt_rate).max() < 1e-3
    assert np.all(np.abs(fs.residual) <= 4 * fs.residual_se)
    se_v = fs.residual_se
    assert np.all(np.abs(fs.dgamma_dt) <= 4 * se_v)


def test_flux_near_boundary_start_moves():
    g = flow_of(np.full((2, 2), 0.9), times=np.linspace(0, 1, 9))
    drift = DriftSpec.gradient(ZERO)
    gamma = picard_iterate(g, drift, DiffusionSpec(0.3), 4000, 1 / 64)
    fs = boundary_flux(gamma, drift, DiffusionSpec(0.3), (0, 0), mc_reps=4000, inner_dt=1 / 64, rng=1)
    assert fs.dgamma_dt[-1] < -3 * fs.residual_se[-1]
    assert fs.lt_rate[-1] < 0
    assert np.all(np.abs(fs.residual) <= 4 * fs.residual_se)


def test_flux_strong_inward_drift():
    spec = ObjectiveSpec((HomTerm(SimpleGraph.edge(), 0.5),))
    drift = DriftSpec.gradient(spec)
    flow, _ = solve_gamma(StepKernel(np.zeros((2, 2))), drift, DiffusionSpec(0.05), 0.5, m=2, out_steps=8,
                          mc_reps=500, inner_dt=1 / 256)
    fs = boundary_flux(flow, drift, DiffusionSpec(0.05), (0, 1), mc_reps=2000, inner_dt=1 / 256)
    assert np.all(fs.lt_rate == 0)
    assert np.all(np.abs(fs.dgamma_dt - fs.minus_phi) <= 4 * fs.residual_se + 1e-3)
    with pytest.raises(ValueError):
        boundary_flux(flow, drift, DiffusionSpec(0.0), (0, 1))


def test_boundary_effect():
    m0, se0 = boundary_effect([0.0], [1.0], 1.0, 1.0, 0.01, 20000, rng=1)
    assert abs(m0) <= 4 * se0
    m1, se1 = boundary_effect([-0.9, 0.3], [0.25, 0.75], 1.0, 1.0, 0.01, 20000, rng=1)
    assert abs(m1) > 3 * se1
