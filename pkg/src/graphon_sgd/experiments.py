"""Experiment configs, runners and built-in assertions.

A config is a TOML file with a top-level ``experiment`` name, a mandatory
``seed``, optional ``[objective]``, ``[diffusion]`` and ``[init]`` tables, a
table named after the experiment with its sizes and budgets, and an
``[assertions]`` table with explicit thresholds. ``run_experiment`` returns
the artifacts in memory; the CLI writes them atomically.
"""
from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .kernels import (StepKernel, SymMatrix, cut_norm_exact, embed_K,
                      read_csv, restrict_Mn)
from .mckean import (DriftSpec, boundary_effect, chaos_diagnostic, load_flow,
                     sampled_array_check, solve_gamma)
from .objectives import (DiffusionSpec, HomTerm, ObjectiveSpec, SimpleGraph,
                         eval_values, hom_density, lipschitz_constants,
                         read_graph)
from .reflect import StepSchedule, write_trajectory
from .sgd import coupling_experiment, pnsgd_run, zero_noise_flow
from .streams import as_stream

EXPERIMENTS = ("coupling", "chaos", "zeroflow", "gamma", "edge-triangle", "diagnostics")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str
    seed: int
    objective: ObjectiveSpec
    diffusion: DiffusionSpec
    init: dict
    params: dict
    assertions: dict
    threads: int = 1
    output: str = None
    base_dir: str = "."
    digest: str = ""
    raw: dict = field(default_factory=dict)


# -- parsing ---------------------------------------------------------------------

def _take(table, key, where, kind=float, default=..., positive=False):
    if key not in table:
        if default is ...:
            raise ConfigError(f"missing key '{where}{key}'")
        return default
    val = table[key]
    try:
        if kind is bool:
            if not isinstance(val, bool):
                raise TypeError
        elif kind is int:
            if isinstance(val, bool) or int(val) != val:
                raise TypeError
            val = int(val)
        elif kind is float:
            if isinstance(val, bool):
                raise TypeError
            val = float(val)
        elif kind is str:
            if not isinstance(val, str):
                raise TypeError
        elif kind is list:
            if not isinstance(val, list):
                raise TypeError
    except (TypeError, ValueError):
        raise ConfigError(f"key '{where}{key}' must be of type {kind.__name__}, got {val!r}") from None
    if positive:
        vals = val if isinstance(val, list) else [val]
        if any((not isinstance(x, (int, float))) or x <= 0 for x in vals):
            raise ConfigError(f"key '{where}{key}' must be positive, got {val!r}")
    return val


def _graph(spec, where, base_dir):
    if isinstance(spec, dict):
        path = _take(spec, "file", where, str)
        return read_graph(os.path.join(base_dir, path))
    named = {"edge": SimpleGraph.edge(), "triangle": SimpleGraph.triangle(),
             "cycle4": SimpleGraph.cycle(4), "c4": SimpleGraph.cycle(4),
             "path3": SimpleGraph.path(3)}
    if not isinstance(spec, str) or spec.lower() not in named:
        raise ConfigError(f"key '{where}graph' must be one of {sorted(named)} or {{file = ...}}, got {spec!r}")
    return named[spec.lower()]


def _objective(t, base_dir):
    where = "objective."
    box = _take(t, "box", where, list, [-1.0, 1.0])
    if len(box) != 2 or not box[0] < box[1]:
        raise ConfigError(f"key '{where}box' must be [lo, hi] with lo < hi")
    terms = []
    for i, term in enumerate(t.get("terms", [])):
        w = f"objective.terms[{i}]."
        terms.append(HomTerm(_graph(term.get("graph"), w, base_dir), _take(term, "target", w),
                             _take(term, "weight", w, default=1.0)))
    try:
        return ObjectiveSpec(tuple(terms), _take(t, "entropy_weight", where, default=0.0),
                             _take(t, "eps", where, default=0.05), tuple(box))
    except ValueError as e:
        raise ConfigError(f"[objective]: {e}") from None


def load_config(path, seed=None) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    try:
        raw = tomllib.loads(data.decode())
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"config is not valid TOML: {e}") from None
    return parse_config(raw, os.path.dirname(os.path.abspath(path)), data, seed)


def parse_config(raw: dict, base_dir=".", data: bytes = b"", seed=None) -> ExperimentConfig:
    name = _take(raw, "experiment", "", str)
    if name not in EXPERIMENTS:
        raise ConfigError(f"key 'experiment' must be one of {EXPERIMENTS}, got {name!r}")
    if seed is None:
        seed = _take(raw, "seed", "", int)
    if seed < 0:
        raise ConfigError("key 'seed' must be >= 0")
    threads = _take(raw, "threads", "", int, 1, positive=True)
    obj = _objective(raw.get("objective", {}), base_dir)
    d = raw.get("diffusion", {})
    beta = _take(d, "beta", "diffusion.", default=0.0)
    if beta < 0:
        raise ConfigError("key 'diffusion.beta' must be >= 0")
    params = raw.get(name.replace("-", "_"), {})
    if not isinstance(params, dict):
        raise ConfigError(f"[{name}] must be a table")
    for k, v in params.items():
        vals = v if isinstance(v, list) else [v]
        if any(isinstance(x, (int, float)) and not isinstance(x, bool) and x <= 0 for x in vals):
            raise ConfigError(f"key '{name.replace('-', '_')}.{k}' must be positive, got {v!r}")
    digest = hashlib.sha256(data + f"\nseed={seed}".encode()).hexdigest()
    cfg = ExperimentConfig(name, seed, obj, DiffusionSpec(beta), raw.get("init", {}), params,
                           raw.get("assertions", {}), threads, raw.get("output"), base_dir, digest, raw)
    _check(cfg)
    return cfg


TOP_KEYS = {"experiment", "seed", "threads", "objective", "diffusion", "init", "assertions", "output"}
ASSERTION_KEYS = {"strictly_decreasing", "ratio_max", "monotone_tol", "contraction_max", "method_gap_max",
                  "density_tol", "pnsgd_density_tol", "contraction_factor", "max_iters", "se_slack",
                  "sampled_decreasing"}


def _check(cfg):
    """Type-check the experiment table eagerly so `validate` catches bad keys."""
    tables = {e.replace("-", "_") for e in EXPERIMENTS}
    for k in cfg.raw:
        if k not in TOP_KEYS | tables:
            raise ConfigError(f"unknown key '{k}'")
    if not isinstance(cfg.assertions, dict):
        raise ConfigError("[assertions] must be a table")
    for k, v in cfg.assertions.items():
        if k not in ASSERTION_KEYS:
            raise ConfigError(f"unknown key 'assertions.{k}'")
        if not isinstance(v, (bool, int, float)):
            raise ConfigError(f"key 'assertions.{k}' must be a number or boolean, got {v!r}")
    p, w = cfg.params, cfg.name.replace("-", "_") + "."
    ints = {"n", "reps", "fine_factor", "m", "out_steps", "mc_reps", "inner_steps", "max_iters",
            "restarts", "every", "paths", "kernels"}
    known = ints | {"taus", "horizon", "dt", "T", "tol", "n_list", "k_list", "graph", "method",
                    "exact_gradient", "gamma_dir", "drift", "beta", "reference_horizon", "tau",
                    "init2", "two_point", "kernel_m", "cross_check"}
    for k in p:
        if k not in known:
            raise ConfigError(f"unknown key '{w}{k}'")
        if k in ints:
            _take(p, k, w, int)
    for k in ("taus", "n_list", "k_list"):
        if k in p:
            _take(p, k, w, list, positive=True)
    kind = cfg.init.get("kind", "uniform")
    if kind not in ("constant", "uniform", "linear", "file"):
        raise ConfigError(f"key 'init.kind' must be constant|uniform|linear|file, got {kind!r}")


# -- helpers ---------------------------------------------------------------------

def init_kernel(init: dict, m: int, box, rng, base_dir=".", where="init.") -> StepKernel:
    kind = init.get("kind", "uniform")
    lo, hi = box
    if kind == "constant":
        return StepKernel.constant(_take(init, "value", where), m, box)
    if kind == "uniform":
        a = _take(init, "low", where, default=lo)
        b = _take(init, "high", where, default=hi)
        u = as_stream(rng).child("init").uniform(*np.triu_indices(m))
        v = np.zeros((m, m))
        v[np.triu_indices(m)] = a + (b - a) * u
        return StepKernel(np.triu(v) + np.triu(v, 1).T, box)
    if kind == "linear":
        slope = _take(init, "slope", where)
        c = _take(init, "offset", where)
        return StepKernel.from_function(lambda x, y: np.clip(slope * (x + y) + c, lo, hi), m, box)
    if kind == "file":
        K = read_csv(os.path.join(base_dir, _take(init, "path", where, str)), StepKernel)
        return StepKernel(K.values, box)
    raise ConfigError(f"key '{where}kind' unknown: {kind!r}")


def _matrix(init, n, box, rng, base_dir, where="init."):
    K = init_kernel(init, n, box, rng, base_dir, where)
    return restrict_Mn(K, n) if K.m != n else SymMatrix(K.values, box)


def _check_bool(name, ok, value, threshold):
    return {"name": name, "value": value, "threshold": threshold, "pass": bool(ok)}


@dataclass
class Result:
    summary: dict
    tables: dict = field(default_factory=dict)     # file name -> text
    kernels: dict = field(default_factory=dict)    # svg name -> kernel / matrix / flow
    flows: dict = field(default_factory=dict)      # dir name -> GraphonFlow
    trajectories: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(a["pass"] for a in self.summary["assertions"])


def _csv(header, rows):
    out = [header]
    for r in rows:
        out.append(",".join(repr(x) if isinstance(x, float) else str(x) for x in r))
    return "\n".join(out) + "\n"


# -- runners ---------------------------------------------------------------------

def _run_coupling(cfg):
    p, a = cfg.params, cfg.assertions
    n = p.get("n", 6)
    A0 = _matrix(cfg.init, n, cfg.objective.box, cfg.seed, cfg.base_dir)
    taus = p.get("taus", [0.04, 0.02, 0.01, 0.005])
    tab = coupling_experiment(cfg.objective, cfg.diffusion, A0, taus, p.get("horizon", 1.0),
                              p.get("reps", 100), p.get("fine_factor", 4), cfg.seed, cfg.threads,
                              bool(p.get("exact_gradient", False)))
    mean = np.array(tab.mean)
    checks = []
    if a.get("strictly_decreasing", True):
        checks.append(_check_bool("mean sup-error strictly decreasing in tau",
                                  bool(np.all(np.diff(mean) < 0)), list(tab.mean), "strict"))
    if "ratio_max" in a:
        r = mean[-1] / mean[0]
        checks.append(_check_bool("error(smallest tau) / error(largest tau)", r <= a["ratio_max"],
                                  float(r), a["ratio_max"]))
    rows = tab.rows
    return Result({"results": tab.summary(), "n": n, "horizon": p.get("horizon", 1.0),
                   "reps": p.get("reps", 100)}, {"coupling.csv": _csv("rep,tau,sup_err", rows)},
                  {"initial.svg": A0}), checks


def _flow_pair(cfg):
    p = cfg.params
    n = p.get("n", 16)
    box = cfg.objective.box
    A1 = _matrix(cfg.init, n, box, cfg.seed, cfg.base_dir)
    init2 = p.get("init2", {"kind": "uniform"})
    A2 = _matrix(init2, n, box, as_stream(cfg.seed).child("second"), cfg.base_dir, "zeroflow.init2.")
    return A1, A2


def _monotone(values):
    return float(np.max(np.diff(values), initial=-np.inf))


def _run_zeroflow(cfg):
    p, a = cfg.params, cfg.assertions
    dt, T = p.get("dt", 1e-3), p.get("horizon", 5.0)
    A1, A2 = _flow_pair(cfg)
    method = p.get("method", "indicator")
    X1 = zero_noise_flow(cfg.objective, A1, dt, T, method)
    X2 = zero_noise_flow(cfg.objective, A2, dt, T, method)
    R1 = eval_values(X1.values(), cfg.objective)
    R2 = eval_values(X2.values(), cfg.objective)
    d0 = float(np.linalg.norm(A1.values - A2.values))
    dT = float(np.linalg.norm(X1.states[-1].values - X2.states[-1].values))
    other = zero_noise_flow(cfg.objective, A1, dt, T, "reflected" if method == "indicator" else "indicator")
    gap = float(np.abs(other.values() - X1.values()).max())
    rise = max(_monotone(R1), _monotone(R2))
    checks = []
    if "monotone_tol" in a:
        checks.append(_check_bool("max per-step increase of R_n", rise <= a["monotone_tol"], rise, a["monotone_tol"]))
    if "contraction_max" in a:
        checks.append(_check_bool("||X1(T)-X2(T)|| / ||X1(0)-X2(0)||", dT <= a["contraction_max"] * d0,
                                  dT / d0, a["contraction_max"]))
    if "method_gap_max" in a:
        checks.append(_check_bool("indicator vs reflected max gap", gap <= a["method_gap_max"], gap, a["method_gap_max"]))
    every = p.get("every", 100)
    idx = list(range(0, len(X1.times), every))
    if idx[-1] != len(X1.times) - 1:
        idx.append(len(X1.times) - 1)
    rn = _csv("t,R1,R2", [(float(X1.times[k]), float(R1[k]), float(R2[k])) for k in idx])
    thin = type(X1)(X1.times[idx], tuple(X1.states[k] for k in idx), "flow", None,
                    X1.l_lower[idx], X1.l_upper[idx])
    summ = {"n": A1.n, "dt": dt, "horizon": T, "method": method, "initial_distance": d0,
            "final_distance": dT, "R_initial": [float(R1[0]), float(R2[0])],
            "R_final": [float(R1[-1]), float(R2[-1])], "max_R_increase": rise, "method_gap": gap}
    return Result(summ, {"rn.csv": rn}, {"x1_initial.svg": A1, "x1_final.svg": X1.states[-1]},
                  trajectories={"trajectory.csv": thin}), checks


def _run_edge_triangle(cfg):
    p, a = cfg.params, cfg.assertions
    spec = cfg.objective
    n = p.get("n", 16)
    dt, T = p.get("dt", 1e-3), p.get("horizon", 5.0)
    A0 = _matrix(cfg.init, n, spec.box, cfg.seed, cfg.base_dir)
    X = zero_noise_flow(spec, A0, dt, T)
    R = eval_values(X.values(), spec)
    # stationary reference: the minimiser is constant, so run the same flow on a 1x1 matrix
    ref_T = p.get("reference_horizon", 4 * T)
    c0 = SymMatrix([[float(A0.values.mean())]], spec.box)
    c_star = float(zero_noise_flow(spec, c0, dt, ref_T).states[-1].values[0, 0])
    edge, tri = SimpleGraph.edge(), SimpleGraph.triangle()
    W = embed_K(X.states[-1])
    H = {"edge": hom_density(edge, W), "triangle": hom_density(tri, W)}
    ref = {"edge": c_star, "triangle": c_star ** 3}
    tau = p.get("tau", dt)
    P = pnsgd_run(spec, cfg.diffusion, A0, StepSchedule.constant(tau, T), cfg.seed, every=max(1, int(round(T / tau)) // 50))
    WP = embed_K(P.states[-1])
    HP = {"edge": hom_density(edge, WP), "triangle": hom_density(tri, WP)}
    targets = {t.graph.num_edges: t.target for t in spec.terms}
    rise = _monotone(R)
    checks = []
    if "monotone_tol" in a:
        checks.append(_check_bool("max per-step increase of R_n", rise <= a["monotone_tol"], rise, a["monotone_tol"]))
    if "density_tol" in a:
        dev = max(abs(H[k] - ref[k]) for k in H)
        checks.append(_check_bool("flow densities vs stationary densities", dev <= a["density_tol"], dev, a["density_tol"]))
    if "pnsgd_density_tol" in a:
        dev = max(abs(HP[k] - ref[k]) for k in HP)
        checks.append(_check_bool("PNSGD densities vs stationary densities", dev <= a["pnsgd_density_tol"], dev,
                                  a["pnsgd_density_tol"]))
    summ = {"n": n, "dt": dt, "horizon": T, "stationary_value": c_star, "flow_densities": H,
            "stationary_densities": ref, "pnsgd_densities": HP, "pnsgd_tau": tau,
            "targets": {"edge": targets.get(1), "triangle": targets.get(3)},
            "R_initial": float(R[0]), "R_final": float(R[-1]), "max_R_increase": rise}
    every = max(1, len(X.times) // 50)
    idx = sorted(set(range(0, len(X.times), every)) | {len(X.times) - 1})
    rows = [(float(X.times[k]), float(R[k])) + tuple(
        hom_density(g, embed_K(X.states[k])) for g in (edge, tri)) for k in idx]
    return Result(summ, {"densities.csv": _csv("t,R_n,H_edge,H_triangle", rows)},
                  {"initial.svg": A0, "final.svg": X.states[-1]},
                  trajectories={"pnsgd.csv": P}), checks


def _drift(cfg):
    d = cfg.params.get("drift")
    if d is None:
        return DriftSpec.gradient(cfg.objective)
    if not isinstance(d, dict) or "name" not in d:
        raise ConfigError("key 'drift' must be a table with a 'name'")
    try:
        return DriftSpec.general(d["name"], **{k: v for k, v in d.items() if k != "name"})
    except ValueError as e:
        raise ConfigError(f"key 'drift.name': {e}") from None


def _gamma(cfg, section):
    p = section
    m, T = p.get("m", 16), p.get("T", 0.5)
    W0 = init_kernel(cfg.init, m, cfg.objective.box, cfg.seed, cfg.base_dir)
    flow, dists = solve_gamma(W0, _drift(cfg), cfg.diffusion, T, m, p.get("out_steps", 32),
                              p.get("mc_reps", 2000), T / p.get("inner_steps", 512), p.get("tol"),
                              p.get("max_iters", 12), cfg.seed, cfg.threads, raise_on_fail=False)
    return W0, flow, dists


def _contraction_checks(flow, a):
    d = flow.meta["distances"]
    tol = flow.meta["tol"]
    checks = []
    if "contraction_factor" in a:
        f = a["contraction_factor"]
        # ratios only count while the next distance is still above the noise band
        ratios = [d[k] / d[k + 1] for k in range(len(d) - 1) if d[k + 1] >= tol]
        checks.append(_check_bool("successive distance ratios above the noise band",
                                  all(r >= f for r in ratios), ratios, f))
    if "max_iters" in a:
        checks.append(_check_bool("iterations to converge", flow.meta["converged"] and len(d) <= a["max_iters"],
                                  len(d), a["max_iters"]))
    return checks


def _run_gamma(cfg):
    W0, flow, dists = _gamma(cfg, cfg.params)
    checks = _contraction_checks(flow, cfg.assertions)
    summ = {"m": flow.m, "T": flow.horizon, "distances": dists, "noise_floor": flow.meta["noise_floor"],
            "tol": flow.meta["tol"], "converged": flow.meta["converged"], "iterations": len(dists)}
    tab = _csv("iteration,distance", [(k + 1, float(x)) for k, x in enumerate(dists)])
    return Result(summ, {"distances.csv": tab}, {"initial.svg": W0, "flow_svg": flow},
                  {"flow": flow}), checks


def _run_chaos(cfg):
    p, a = cfg.params, cfg.assertions
    gsec = cfg.raw.get("gamma", {})
    if "gamma_dir" in p:
        flow = load_flow(os.path.join(cfg.base_dir, p["gamma_dir"]))
        W0 = init_kernel(cfg.init, gsec.get("m", flow.m), cfg.objective.box, cfg.seed, cfg.base_dir)
        gchecks = []
    else:
        W0, flow, _ = _gamma(cfg, gsec)
        gchecks = _contraction_checks(flow, a)
    steps = gsec.get("inner_steps", 512)
    dt = p.get("dt", flow.horizon / steps)
    rows = chaos_diagnostic(cfg.objective, cfg.diffusion, flow, p.get("n_list", [8, 16, 32, 64]),
                            p.get("reps", 20), dt, as_stream(cfg.seed).child("chaos"), p.get("restarts", 8),
                            cfg.threads, W0)
    med = [r.median for r in rows]
    se = [1.2533 * np.std(r.values, ddof=1) / math.sqrt(len(r.values)) if len(r.values) > 1 else 0.0 for r in rows]
    checks = list(gchecks)
    slack = a.get("se_slack", 1.0)
    steps_ok = [med[i + 1] <= med[i] + slack * math.hypot(se[i], se[i + 1]) for i in range(len(rows) - 1)]
    checks.append(_check_bool("median nonincreasing in n (pooled-SE slack)", all(steps_ok), med, slack))
    if "ratio_max" in a:
        r = med[-1] / med[0]
        checks.append(_check_bool("median(largest n) / median(smallest n)", r <= a["ratio_max"], float(r), a["ratio_max"]))
    viol = sum(r.sandwich_violations for r in rows)
    checks.append(_check_bool("cut**4 <= t(C4) on every snapshot", viol == 0, viol, 0))
    table = _csv("n,rep,sup_cut", [(r.n, k, v) for r in rows for k, v in enumerate(r.values)])
    summ = {"n_list": [r.n for r in rows], "median": med, "q1": [r.q1 for r in rows], "q3": [r.q3 for r in rows],
            "median_se": se, "gamma_distances": flow.meta.get("distances"),
            "noise_floor": flow.meta.get("noise_floor")}
    return Result(summ, {"chaos.csv": table}, {}, {"flow": flow}), checks


def _run_diagnostics(cfg):
    p, a = cfg.params, cfg.assertions
    box = cfg.objective.box
    stream = as_stream(cfg.seed)
    F = _graph(p.get("graph", "triangle"), "diagnostics.", cfg.base_dir)
    W = init_kernel(cfg.init, p.get("kernel_m", 4), box, stream.child("kernel"), cfg.base_dir)
    rows = sampled_array_check(W, F, p.get("k_list", [10, 20, 40, 80]), p.get("reps", 50), stream.child("sampled"))
    devs = [r["mean_abs_dev"] for r in rows]
    # cut / C4 bracket on random kernels
    C4 = SimpleGraph.cycle(4)
    viol = 0
    m = p.get("m", 10)
    for i in range(p.get("kernels", 50)):
        K = init_kernel({"kind": "uniform", "low": -1.0, "high": 1.0}, m, (-1.0, 1.0), stream.child("sandwich", i))
        c, _ = cut_norm_exact(K)
        h = hom_density(C4, K)
        viol += not (c ** 4 <= h + 1e-12 and h <= 4 * c + 1e-12)
    tp = p.get("two_point", {"values": [-0.5, 1.0], "probs": [2 / 3, 1 / 3]})
    beta = p.get("beta", 1.0)
    paths = p.get("paths", 100000)
    dt = p.get("dt", 1e-3)
    T = p.get("horizon", 1.0)
    zero = boundary_effect([0.0], [1.0], beta, T, dt, paths, stream.child("zero"))
    two = boundary_effect(tp["values"], tp["probs"], beta, T, dt, paths, stream.child("two"))
    checks = []
    if a.get("sampled_decreasing", True):
        checks.append(_check_bool("sampled deviation decreasing in k", all(np.diff(devs) < 0), devs, "decreasing"))
    checks.append(_check_bool("cut/C4 bracket violations", viol == 0, viol, 0))
    checks.append(_check_bool("|mean X(T)| <= 3 SE from 0", abs(zero[0]) <= 3 * zero[1], list(zero), 3))
    checks.append(_check_bool("|mean X(T)| > 3 SE from two-point start", abs(two[0]) > 3 * two[1], list(two), 3))
    summ = {"sampled": rows, "sandwich_kernels": p.get("kernels", 50), "sandwich_violations": viol,
            "boundary_zero_start": {"mean": zero[0], "se": zero[1]},
            "boundary_two_point": {"mean": two[0], "se": two[1]}}
    tab = _csv("k,mean_abs_dev,se", [(r["k"], r["mean_abs_dev"], r["se"]) for r in rows])
    return Result(summ, {"sampled.csv": tab}, {"kernel.svg": W}), checks


RUNNERS = {"coupling": _run_coupling, "zeroflow": _run_zeroflow, "edge-triangle": _run_edge_triangle,
           "gamma": _run_gamma, "chaos": _run_chaos, "diagnostics": _run_diagnostics}


def _lip_dict(spec):
    c = lipschitz_constants(spec)
    return {"kappa2": c.kappa2, "kappa_cut": c.kappa_cut, "m_inf": c.m_inf, "sigma": c.sigma,
            "entropy_L": c.entropy_L, "per_term": list(c.per_term)}


def run_experiment(cfg: ExperimentConfig) -> Result:
    res, checks = RUNNERS[cfg.name](cfg)
    res.summary = {"experiment": cfg.name, "version": __version__, "config_hash": cfg.digest,
                   "seed": cfg.seed, "lipschitz": _lip_dict(cfg.objective), **res.summary,
                   "assertions": checks, "passed": all(c["pass"] for c in checks)}
    return res


def write_result(res: Result, out_dir) -> None:
    """Write every artifact of ``res`` into the existing directory ``out_dir``."""
    import json

    from .mckean import save_flow
    from .render import render_heatmap
    for name, text in sorted(res.tables.items()):
        with open(os.path.join(out_dir, name), "w", newline="\n") as fh:
            fh.write(text)
    for name, traj in sorted(res.trajectories.items()):
        write_trajectory(traj, os.path.join(out_dir, name))
    for name, obj in sorted(res.kernels.items()):
        render_heatmap(obj, os.path.join(out_dir, name))
    for name, flow in sorted(res.flows.items()):
        save_flow(flow, os.path.join(out_dir, name))
    with open(os.path.join(out_dir, "summary.json"), "w", newline="\n") as fh:
        json.dump(_plain(res.summary), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x
