"""The ten acceptance criteria at their stated sizes and tolerances.

Each test prints one PASS/FAIL line. Run alone with
``pytest tests/test_acceptance.py -s`` or ``python tests/test_acceptance.py``.
"""
import os
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))
from conftest import fd_grad, rand_sym  # noqa: E402

from graphon_sgd.experiments import load_config, run_experiment, write_result  # noqa: E402
from graphon_sgd.kernels import (SymMatrix, StepKernel, cut_norm_exact, embed_K,  # noqa: E402
                                 l1_norm, l2_norm, linf_norm,
                                 read_csv, restrict_Mn, write_csv)
from graphon_sgd.mckean import (DriftSpec, GraphonFlow, boundary_effect,  # noqa: E402
                                picard_iterate)
from graphon_sgd.objectives import (DiffusionSpec, HomTerm, ObjectiveSpec,  # noqa: E402
                                    SimpleGraph, all_xi, eval_Rn, grad_Rn,
                                    hom_density, phi, stochastic_grad)
from graphon_sgd.reflect import skorokhod_map  # noqa: E402
from graphon_sgd.sgd import coupling_experiment, pnsgd_run  # noqa: E402
from graphon_sgd.reflect import StepSchedule  # noqa: E402

CONFIGS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")
SPEC = ObjectiveSpec.edge_triangle(0.3, 0.027)


@pytest.fixture
def report(capsys):
    def emit(k, title, ok, detail, elapsed, limit):
        ok = bool(ok) and elapsed < limit
        with capsys.disabled():
            print(f"\ncriterion {k:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail} "
                  f"[{elapsed:.1f}s, limit {limit:.0f}s]")
        return ok
    return emit


def _run(name, out_dir=None, **override):
    cfg = load_config(os.path.join(CONFIGS, f"{name}.toml"))
    cfg.params.update(override)
    t0 = time.perf_counter()
    res = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_result(res, out_dir)
    return res, elapsed


def _checks(res):
    return "; ".join(f"{c['name']} = {c['value']}" for c in res.summary["assertions"])


def test_c01_unbiased_stochastic_gradient(report):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        a = rand_sym(rng, 3, 0.1, 0.9)
        A = SymMatrix(a, (0, 1))
        mean = sum(stochastic_grad(A, SPEC, xi).values for xi in all_xi(SPEC, 3)) / 3 ** 6
        fd = fd_grad(lambda x: eval_Rn(SymMatrix(x, (-1, 2)), SPEC), a)
        worst = max(worst, np.abs(mean - fd).max() / np.abs(fd).max())
    assert report(1, "exhaustive xi average vs finite differences", worst < 1e-6,
                  f"max rel err {worst:.2e}", time.perf_counter() - t0, 5)


def test_c02_cut_c4_sandwich(report):
    rng = np.random.default_rng(2)
    C4 = SimpleGraph.cycle(4)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(50):
        W = StepKernel(rand_sym(rng, 10))
        c, _ = cut_norm_exact(W)
        h = hom_density(C4, W)
        bad += not (c ** 4 <= h + 1e-12 and h <= 4 * c + 1e-12)
    assert report(2, "cut^4 <= t(C4) <= 4 cut", bad == 0, f"{bad} violations", time.perf_counter() - t0, 30)


def test_c03_skorokhod_lipschitz(report):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    t = np.arange(1001)
    bad, worst = 0, 0.0
    for _ in range(100):
        y1 = np.concatenate([[rng.uniform(-1, 1)], rng.normal(0, 0.1, 1000)]).cumsum()
        y2 = np.concatenate([[rng.uniform(-1, 1)], rng.normal(0, 0.1, 1000)]).cumsum()
        lhs = np.abs(skorokhod_map(t, y1, (-1, 1)).x - skorokhod_map(t, y2, (-1, 1)).x).max()
        rhs = np.abs(y1 - y2).max()
        bad += lhs > 4 * rhs
        worst = max(worst, lhs / rhs)
    assert report(3, "sup|L(y1)-L(y2)| <= 4 sup|y1-y2|", bad == 0, f"{bad} violations, worst ratio {worst:.3f}",
                  time.perf_counter() - t0, 5)


def test_c04_gradient_phi_consistency(report):
    rng = np.random.default_rng(4)
    specs = [SPEC, ObjectiveSpec.edge_triangle(0.5, 0.2, psi=1.0)]
    t0 = time.perf_counter()
    worst = 0.0
    for n in (3, 4, 6):
        for spec in specs:
            a = rand_sym(rng, n, 0.05, 0.95)
            ph = phi(embed_K(SymMatrix(a, (0, 1))), spec).values
            fd = n ** 2 * fd_grad(lambda x: eval_Rn(SymMatrix(x, (-1, 2)), spec), a)
            worst = max(worst, np.abs(fd - ph).max() / np.abs(ph).max())
    assert report(4, "n^2 * central differences vs phi", worst < 1e-4, f"max rel err {worst:.2e}",
                  time.perf_counter() - t0, 30)


def test_c05_coupling_trend(report):
    res, el = _run("coupling")
    assert report(5, "PNSGD vs reflected SDE sup-error", res.passed, _checks(res), el, 600)


def test_c06_zero_noise_flow(report):
    res, el = _run("zeroflow")
    assert report(6, "zero-noise flow descent and contraction", res.passed, _checks(res), el, 120)


@pytest.fixture(scope="module")
def gamma_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("gamma")
    res, el = _run("gamma", out_dir=str(out))
    return res, el, str(out / "flow")


def test_c07_picard_contraction(report, gamma_run):
    res, el, _ = gamma_run
    s = res.summary
    assert report(7, "Picard distances", res.passed,
                  f"{_checks(res)}; distances {s['distances']}, noise floor {s['noise_floor']:.2e}", el, 600)


def test_c08_propagation_of_chaos(report, gamma_run):
    _, _, flow_dir = gamma_run
    res, el = _run("chaos", gamma_dir=flow_dir)
    assert report(8, "chaos medians", res.passed, _checks(res), el, 1200)


def test_c09_boundary_effect(report):
    t0 = time.perf_counter()
    z = boundary_effect([0.0], [1.0], 1.0, 1.0, 1e-3, 100_000, rng=9)
    two = boundary_effect([-0.5, 1.0], [2 / 3, 1 / 3], 1.0, 1.0, 1e-3, 100_000, rng=10)
    ok = abs(z[0]) <= 3 * z[1] and abs(two[0]) > 3 * two[1]
    assert report(9, "reflection moves the mean only for the two-point start", ok,
                  f"zero start {z[0]:+.4f} (SE {z[1]:.4f}); two-point {two[0]:+.4f} (SE {two[1]:.4f})",
                  time.perf_counter() - t0, 60)


def test_c10_determinism_equivariance(report, tmp_path):
    rng = np.random.default_rng(10)
    t0 = time.perf_counter()
    ok = []
    # thread-count invariance
    A = SymMatrix(rand_sym(rng, 4, 0.2, 0.8), (0, 1))
    tabs = [coupling_experiment(SPEC, DiffusionSpec(0.2), A, [0.04, 0.02], 0.4, 6, 2, rng=3, threads=t)
            for t in (1, 3)]
    ok.append(tabs[0].rows == tabs[1].rows)
    g = GraphonFlow.constant(StepKernel(rand_sym(rng, 8)), np.linspace(0, 0.25, 5))
    drift = DriftSpec.gradient(ObjectiveSpec((HomTerm(SimpleGraph.edge(), 0.2),)))
    p = [picard_iterate(g, drift, DiffusionSpec(0.3), 40, 1 / 64, rng=1, threads=t).values() for t in (1, 4)]
    ok.append(np.array_equal(*p))
    sched = StepSchedule.constant(0.05, 0.5)
    runs = [pnsgd_run(SPEC, DiffusionSpec(0.3), A, sched, rng=2).values() for _ in range(2)]
    ok.append(np.array_equal(*runs))
    # permutation equivariance
    worst = 0.0
    for _ in range(10):
        B = SymMatrix(rand_sym(rng, 6, 0, 1), (0, 1))
        perm = rng.permutation(6)
        worst = max(worst, abs(eval_Rn(B.permuted(perm), SPEC) - eval_Rn(B, SPEC)))
        G = grad_Rn(B, SPEC).values
        worst = max(worst, np.abs(grad_Rn(B.permuted(perm), SPEC).values - G[np.ix_(perm, perm)]).max())
    ok.append(worst <= 1e-12)
    # round trips and norm scaling
    a = rand_sym(rng, 7)
    M = SymMatrix(a)
    K = embed_K(M)
    ok.append(np.array_equal(restrict_Mn(K, 7).values, a))
    write_csv(M, tmp_path / "m.csv")
    ok.append(np.array_equal(read_csv(tmp_path / "m.csv").values, a))
    ok.append(l2_norm(K) ** 2 * 49 == pytest.approx((a ** 2).sum(), rel=1e-15))
    ok.append(l1_norm(K) * 49 == pytest.approx(np.abs(a).sum(), rel=1e-15))
    ok.append(linf_norm(K) == np.abs(a).max())
    ok.append(cut_norm_exact(K.refine(2))[0] == pytest.approx(cut_norm_exact(K)[0], rel=1e-14))
    ok.append(cut_norm_exact(K)[0] <= l1_norm(K) <= l2_norm(K) <= linf_norm(K))
    h = StepKernel(0.5 * a)
    ok.append(cut_norm_exact(h)[0] == 0.5 * cut_norm_exact(K)[0])
    assert report(10, "determinism, equivariance, round trips", all(ok),
                  f"{sum(ok)}/{len(ok)} checks, perm err {worst:.1e}", time.perf_counter() - t0, 60)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-s", "-q"]))
