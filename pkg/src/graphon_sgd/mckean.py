"""The deterministic kernel-valued curve Gamma and diagnostics around it.

Gamma solves a McKean-Vlasov fixed point: every cell (x, y) carries a
one-dimensional reflected diffusion

    dX = b(X, Gamma(t))(x, y) dt + Sigma(Gamma(t))(x, y) dB + dL^- - dL^+,

started at W0(x, y), and Gamma(t)(x, y) must equal E[X(t)]. We find it by
Picard iteration: freeze Gamma^(k), simulate every cell by Monte Carlo,
average. The Brownian increments of (cell, replicate, step) do not depend on
k (common random numbers), so successive iterates differ only through the
drift and the contraction is visible well below the Monte Carlo noise.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .kernels import (StepKernel, cut_norm_heuristic, embed_K, read_csv,
                      restrict_Mn, sample_matrix, write_csv)
from .objectives import (DiffusionSpec, ObjectiveSpec, SimpleGraph, contract,
                         hom_density, phi_values)
from .parallel import ordered_map
from .reflect import StepSchedule, euler_paths, pair_streams, reflected_euler
from .streams import as_stream

CELL_CHUNK = 32


class NoConvergence(RuntimeError):
    def __init__(self, msg, distances, flow=None):
        super().__init__(msg)
        self.distances = list(distances)
        self.flow = flow


@dataclass(frozen=True, eq=False)
class GraphonFlow:
    """Kernels on an m-grid at increasing times; piecewise constant (right-continuous) in between."""

    times: np.ndarray
    kernels: tuple
    box: tuple
    stderr: np.ndarray = None
    l_lower: np.ndarray = None
    l_upper: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) != len(self.kernels) or np.any(np.diff(t) <= 0):
            raise ValueError("times must be increasing and match the kernels")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "kernels", tuple(self.kernels))

    @classmethod
    def constant(cls, W0: StepKernel, times) -> "GraphonFlow":
        return cls(np.asarray(times, dtype=float), (W0,) * len(times), W0.box)

    @classmethod
    def from_values(cls, times, values, box, **kw) -> "GraphonFlow":
        return cls(times, tuple(StepKernel(v, box) for v in values), box, **kw)

    @property
    def m(self) -> int:
        return self.kernels[0].m

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def values(self) -> np.ndarray:
        return np.stack([k.values for k in self.kernels])

    def at(self, t: float) -> StepKernel:
        j = int(np.searchsorted(self.times, t + 1e-12, side="right")) - 1
        return self.kernels[min(max(j, 0), len(self.kernels) - 1)]

    def subsample(self, idx) -> "GraphonFlow":
        idx = list(idx)
        pick = (lambda a: None if a is None else a[idx])
        return GraphonFlow(self.times[idx], tuple(self.kernels[i] for i in idx), self.box,
                           pick(self.stderr), pick(self.l_lower), pick(self.l_upper), dict(self.meta))


def flow_distances(a: GraphonFlow, b: GraphonFlow) -> np.ndarray:
    """L2 distance between the two flows at each (shared) time."""
    return np.sqrt(((a.values() - b.values()) ** 2).mean(axis=(1, 2)))


def save_flow(flow: GraphonFlow, path) -> None:
    """Directory of ``kernel_XXXX.csv`` files plus ``manifest.json``."""
    os.makedirs(path, exist_ok=True)
    files = []
    for j, K in enumerate(flow.kernels):
        name = f"kernel_{j:04d}.csv"
        write_csv(K, os.path.join(path, name))
        files.append(name)
    manifest = {"grid": flow.m, "times": [float(t) for t in flow.times], "box": list(flow.box),
                "files": files, **_jsonable(flow.meta)}
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_flow(path) -> GraphonFlow:
    with open(os.path.join(path, "manifest.json")) as fh:
        man = json.load(fh)
    kernels = tuple(read_csv(os.path.join(path, f), StepKernel) for f in man["files"])
    meta = {k: v for k, v in man.items() if k not in ("grid", "times", "box", "files")}
    return GraphonFlow(np.array(man["times"]), kernels, tuple(man["box"]), meta=meta)


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, (np.floating, np.integer)):
            v = v.item()
        elif isinstance(v, (list, tuple)):
            v = [x.item() if isinstance(x, (np.floating, np.integer)) else x for x in v]
        out[k] = v
    return out


# -- drifts -----------------------------------------------------------------------

DRIFTS = {}


def register_drift(name):
    def deco(fn):
        DRIFTS[name] = fn
        return fn
    return deco


@register_drift("zero")
def _zero(z, w):
    return np.zeros(np.broadcast(z, w).shape)


@register_drift("constant")
def _constant(z, w, c=0.0):
    return np.full(np.broadcast(z, w).shape, float(c))


@register_drift("kernel_pull")
def _kernel_pull(z, w, rate=1.0):
    """Pull each coordinate towards the current kernel value at its cell."""
    return -rate * (z - w)


@dataclass(frozen=True)
class DriftSpec:
    """``b(z, W)(x, y)``: either ``-phi(W)(x, y)`` or a registered family ``name(z, W(x, y), **params)``.

    ``L``, ``kappa`` and ``kappa_cut`` are the Lipschitz constants in z, in
    L2 and in cut norm (metadata only).
    """

    mode: str = "gradient"
    spec: ObjectiveSpec = None
    name: str = None
    params: dict = field(default_factory=dict)
    L: float = 0.0
    kappa: float = 0.0
    kappa_cut: float = 0.0

    def __post_init__(self):
        if self.mode == "gradient":
            if self.spec is None:
                raise ValueError("gradient drift needs an ObjectiveSpec")
        elif self.mode == "general":
            if self.name not in DRIFTS:
                raise ValueError(f"unknown drift family {self.name!r}; known: {sorted(DRIFTS)}")
        else:
            raise ValueError(f"unknown drift mode {self.mode!r}")

    @classmethod
    def gradient(cls, spec: ObjectiveSpec) -> "DriftSpec":
        from .objectives import lipschitz_constants
        c = lipschitz_constants(spec)
        return cls("gradient", spec, L=c.entropy_L, kappa=c.kappa2, kappa_cut=c.kappa_cut)

    @classmethod
    def general(cls, name: str, **params) -> "DriftSpec":
        return cls("general", name=name, params=params)

    def field(self, v: np.ndarray) -> np.ndarray:
        """State-independent part: ``-phi`` on kernel values (gradient mode only)."""
        return -phi_values(v, self.spec)

    def __call__(self, z, w):
        return DRIFTS[self.name](z, w, **self.params)


# -- Picard ---------------------------------------------------------------------

def _grid_index(times, dt):
    steps = times / dt
    idx = np.rint(steps).astype(int)
    if np.any(np.abs(steps - idx) > 1e-6) or idx[0] != 0:
        raise ValueError("inner_dt must divide every output time")
    return idx


def _simulate(flow: GraphonFlow, drift: DriftSpec, diff: DiffusionSpec, reps: int, inner_dt: float,
              stream, cells=None, threads: int = 1, keep_paths=False):
    """Monte Carlo of the per-cell reflected diffusions driven by ``flow``.

    Returns per output time and cell: mean, standard error, mean cumulative
    lower/upper local time (each of shape (J, C)); ``cells`` are (rows, cols).
    """
    m = flow.m
    if cells is None:
        cells = np.triu_indices(m)
    ia, ja = (np.asarray(c) for c in cells)
    out_idx = _grid_index(flow.times, inner_dt)
    K = int(out_idx[-1])
    jstep = np.searchsorted(out_idx, np.arange(K), side="right") - 1
    sched = StepSchedule(np.full(max(K, 1), float(inner_dt)))
    vals = flow.values()
    wcell = vals[:, ia, ja]
    fieldc = drift.field(vals)[:, ia, ja] if drift.mode == "gradient" else None
    sig = None if diff.is_zero else diff.values(vals)[:, ia, ja]
    box = flow.box
    rep_ids = np.arange(reps)

    def run(sl):
        c = np.arange(len(ia))[sl]
        noise = stream.child("cellpath", ia[c][:, None], ja[c][:, None], rep_ids[None, :])
        if fieldc is not None:
            def b(x, k, t):
                return fieldc[jstep[k], c][:, None]
        else:
            def b(x, k, t):
                return drift(x, wcell[jstep[k], c][:, None])

        s = None
        if sig is not None:
            def s(x, k, t):
                return sig[jstep[k], c][:, None]

        def observe(x, lm, lp):
            se = x.std(axis=1, ddof=1) / math.sqrt(reps) if reps > 1 else np.zeros(len(x))
            rec = (x.mean(axis=1), se, lm.mean(axis=1), lp.mean(axis=1))
            return rec + ((x.copy(), lm.copy(), lp.copy()) if keep_paths else ())

        x0 = np.repeat(wcell[0, c][:, None], reps, axis=1)
        if K == 0:
            return [observe(x0, 0 * x0, 0 * x0)]
        return euler_paths(x0, sched, box, b, s, noise if s else None, out_idx, observe)

    chunks = [slice(i, i + CELL_CHUNK) for i in range(0, len(ia), CELL_CHUNK)]
    parts = ordered_map(run, chunks, threads)
    n_fields = len(parts[0][0])
    return [np.concatenate([np.stack([rec[f] for rec in p]) for p in parts], axis=1) for f in range(n_fields)]


def _to_flow(flow, mean, se, lm, lp, ia, ja):
    J = len(flow.times)
    m = flow.m
    lo, hi = flow.box

    def full(u):
        v = np.empty((J, m, m))
        v[:, ia, ja] = u
        v[:, ja, ia] = u
        return v

    vals = np.clip(full(mean), lo, hi)
    return GraphonFlow.from_values(flow.times, vals, flow.box, stderr=full(se),
                                   l_lower=full(lm), l_upper=full(lp))


def picard_iterate(gamma: GraphonFlow, drift: DriftSpec, diff: DiffusionSpec, mc_reps: int = 2000,
                   inner_dt: float = None, rng=0, threads: int = 1) -> GraphonFlow:
    """One Picard step Gamma^(k) -> Gamma^(k+1) on gamma's time grid.

    Each upper-triangle cell runs ``mc_reps`` reflected Euler paths with drift
    ``b(x(s), Gamma^(k)(s))`` at the cell and diffusion ``Sigma(Gamma^(k)(s))``,
    Gamma^(k) taken piecewise constant between its times; the result is the
    per-cell mean (clamped, mirrored) with standard errors and mean local
    times attached. For general drifts the state argument is the path's own
    current value. Without noise a single path per cell is exact.
    """
    if mc_reps < 1:
        raise ValueError("mc_reps must be >= 1")
    if inner_dt is None:
        inner_dt = gamma.horizon / 512 if gamma.horizon > 0 else 1.0
    reps = 1 if diff.is_zero else mc_reps
    ia, ja = np.triu_indices(gamma.m)
    mean, se, lm, lp = _simulate(gamma, drift, diff, reps, inner_dt, as_stream(rng).child("picard"),
                                 threads=threads)
    return _to_flow(gamma, mean, se, lm, lp, ia, ja)


def solve_gamma(W0: StepKernel, drift: DriftSpec, diff: DiffusionSpec, T: float, m: int = 16,
                out_steps: int = 32, mc_reps: int = 2000, inner_dt: float = None, tol: float = None,
                max_iters: int = 12, rng=0, threads: int = 1, raise_on_fail: bool = True):
    """Picard iteration from the constant flow W0 until successive iterates are within ``tol``.

    Iterates are tracked on the inner time grid (so the frozen Gamma^(k) is
    piecewise constant at resolution ``inner_dt``) and the result is reported
    on ``out_steps + 1`` equally spaced output times. ``tol`` defaults to twice
    the noise floor, the mean per-cell standard error of the first iterate.
    Distances are sup over inner times of the L2 distance.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if inner_dt is None:
        inner_dt = T / 512
    K = int(round(T / inner_dt))
    if abs(K * inner_dt - T) > 1e-9 * T or K % out_steps:
        raise ValueError("inner_dt must divide T into a multiple of out_steps")
    start = restrict_Mn(W0, m)
    W0m = StepKernel(start.values, W0.box)
    times = np.arange(K + 1) * inner_dt
    gamma = GraphonFlow.constant(W0m, times)
    dists = []
    floor = None
    for _ in range(max_iters):
        new = picard_iterate(gamma, drift, diff, mc_reps, inner_dt, rng, threads)
        dists.append(float(flow_distances(new, gamma).max()))
        if floor is None:
            floor = float(new.stderr.mean())
            if tol is None:
                tol = 2 * floor if floor > 0 else 1e-10
        gamma = new
        if dists[-1] < tol:
            break
    out = gamma.subsample(range(0, K + 1, K // out_steps))
    out.meta.update({"distances": dists, "noise_floor": floor, "tol": tol, "mc_reps": mc_reps,
                     "inner_dt": inner_dt, "iterations": len(dists), "converged": dists[-1] < tol})
    if dists[-1] >= tol and raise_on_fail:
        raise NoConvergence(f"no convergence after {max_iters} iterations: {dists}", dists, out)
    return out, dists


# -- diagnostics ----------------------------------------------------------------

@dataclass(frozen=True)
class ChaosRow:
    n: int
    median: float
    q1: float
    q3: float
    values: tuple
    sandwich_violations: int


def chaos_diagnostic(spec: ObjectiveSpec, diff: DiffusionSpec, gamma: GraphonFlow, n_list, reps: int,
                     dt: float, rng=0, restarts: int = 8, threads: int = 1, W0: StepKernel = None):
    """sup_t cut-norm distance between K(X_n(t)) and Gamma(t) for several n.

    ``X_n`` is the n-coordinate reflected SDE started at ``restrict_Mn(W0, n)``
    (``W0`` defaults to gamma's first kernel), integrated with step ``dt``
    which must divide gamma's output spacing. The cut norm of each difference
    is the heuristic lower bound; every snapshot is also checked against the
    C4 bracket ``cut**4 <= t(C4, D)``.
    """
    W0 = gamma.kernels[0] if W0 is None else W0
    out_idx = _grid_index(gamma.times, dt)
    sched = StepSchedule(np.full(int(out_idx[-1]), float(dt)))
    C4 = SimpleGraph.cycle(4)
    base = as_stream(rng)
    rows = []
    for n in n_list:
        A0 = restrict_Mn(W0, n)

        def one(rep, n=n, A0=A0):
            stream = base.child("chaos", n, rep)
            tr = reflected_euler(spec, diff, A0, sched, noise=None if diff.is_zero else pair_streams(stream, n))
            sup, bad = 0.0, 0
            for j, k in enumerate(out_idx):
                D = embed_K(tr.states[k]) - gamma.kernels[j]
                c, _ = cut_norm_heuristic(D, restarts, stream.child("cut", j))
                if c ** 4 > hom_density(C4, D) + 1e-12:
                    bad += 1
                sup = max(sup, c)
            return sup, bad

        res = ordered_map(one, range(reps), threads)
        v = np.array([r[0] for r in res])
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        rows.append(ChaosRow(n, float(med), float(q1), float(q3), tuple(float(x) for x in v),
                             int(sum(r[1] for r in res))))
    return rows


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def injective_density(F: SimpleGraph, A: np.ndarray) -> float:
    """Average of prod A(phi(u), phi(w)) over injective maps V(F) -> [k].

    Sums over injections come from all-maps sums by Moebius inversion over
    set partitions of V(F); each quotient is contracted like a multigraph
    with loops.
    """
    k = A.shape[0]
    v = F.k
    if v > k:
        raise ValueError("graph has more vertices than the matrix")
    total = 0.0
    for part in _set_partitions(list(range(v))):
        block = {x: b for b, B in enumerate(part) for x in B}
        mu = 1
        for B in part:
            mu *= (-1) ** (len(B) - 1) * math.factorial(len(B) - 1)
        edges = [(block[a], block[b]) for a, b in F.edges]
        total += mu * float(contract(edges, A)) * float(k) ** len(part)
    return total / math.perm(k, v)


def sampled_array_check(W: StepKernel, F: SimpleGraph, k_list, reps: int, rng=0):
    """Mean |t_inj(F, G_k[W]) - t(F, W)| over ``reps`` sampled k x k matrices, per k."""
    target = hom_density(F, W)
    base = as_stream(rng)
    rows = []
    for k in k_list:
        devs = []
        for r in range(reps):
            A, _ = sample_matrix(W, k, base.child("sample", k, r))
            devs.append(abs(injective_density(F, A.values) - target))
        devs = np.array(devs)
        se = devs.std(ddof=1) / math.sqrt(reps) if reps > 1 else 0.0
        rows.append({"k": int(k), "mean_abs_dev": float(devs.mean()), "se": float(se), "target": target})
    return rows


@dataclass(frozen=True)
class FluxSeries:
    times: np.ndarray
    dgamma_dt: np.ndarray
    minus_phi: np.ndarray
    lt_rate: np.ndarray   # rate of L^- minus rate of L^+
    residual: np.ndarray
    residual_se: np.ndarray


def boundary_flux(gamma: GraphonFlow, drift: DriftSpec, diff: DiffusionSpec, cell, mc_reps: int = 20000,
                  inner_dt: float = None, rng=0) -> FluxSeries:
    """Velocity of Gamma at one cell against drift and boundary local-time rates.

    Re-simulates ``mc_reps`` paths of the cell under ``gamma`` and, at each
    interior output time, forms central differences of the ensemble mean
    (dGamma/dt) and of the mean local times. The residual
    ``dGamma/dt + phi(Gamma) - (rate L^- - rate L^+)`` is the Monte Carlo
    mean of the noise increments, so it should vanish within ``residual_se``.
    """
    if drift.mode != "gradient":
        raise ValueError("boundary_flux needs a gradient drift")
    if diff.is_zero:
        raise ValueError("boundary_flux needs a positive diffusion")
    if inner_dt is None:
        inner_dt = gamma.horizon / 512
    a, b = min(cell), max(cell)
    cells = (np.array([a]), np.array([b]))
    mean, se, lm, lp, X, LM, LP = _simulate(gamma, drift, diff, mc_reps, inner_dt,
                                            as_stream(rng).child("flux"), cells, keep_paths=True)
    t = gamma.times
    dt2 = t[2:] - t[:-2]
    drift_field = drift.field(gamma.values())[:, a, b]
    # the frozen drift is piecewise constant on [t_j, t_{j+1})
    integral = drift_field[:-1] * np.diff(t)
    drift_avg = (integral[:-1] + integral[1:]) / dt2
    dX = (X[2:, 0] - X[:-2, 0])
    dL = (LM[2:, 0] - LM[:-2, 0]) - (LP[2:, 0] - LP[:-2, 0])
    noise = (dX - dL) / dt2[:, None] - drift_avg[:, None]
    vel = dX.mean(axis=1) / dt2
    rate = dL.mean(axis=1) / dt2
    resid = noise.mean(axis=1)
    rse = noise.std(axis=1, ddof=1) / math.sqrt(mc_reps)
    return FluxSeries(t[1:-1], vel, drift_avg, rate, resid, rse)


def boundary_effect(values, probs, beta: float, T: float, dt: float, paths: int, rng=0, box=(-1.0, 1.0)):
    """Mean and standard error of X(T) for driftless reflected Brownian motion.

    Starting points are drawn from the discrete law ``values``/``probs``;
    ``beta`` is the diffusion coefficient. Returns ``(mean, se)``.
    """
    stream = as_stream(rng)
    u = stream.child("start").uniform(np.arange(paths))
    cdf = np.cumsum(probs) / np.sum(probs)
    x0 = np.asarray(values, dtype=float)[np.searchsorted(cdf, u, side="right").clip(0, len(values) - 1)]
    sched = StepSchedule.constant(dt, T)
    noise = stream.child("bm", np.arange(paths))
    sig = np.full(paths, float(beta))
    (xT,) = euler_paths(x0, sched, box, None, lambda x, k, t: sig, noise, [len(sched)],
                        observe=lambda x, a, b: x.copy())
    return float(xT.mean()), float(xT.std(ddof=1) / math.sqrt(paths))
