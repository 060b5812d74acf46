"""Projected gradient descent, projected noisy SGD and their continuous-time partners.

All updates work in the "phi scale": ``n**2 * grad R_n(A)`` is computed as
``phi(K(A))`` at the cells, so a step reads ``W + tau * (-phi) + noise`` and
then clamps. Using the same arithmetic in every integrator is what makes
PGD, noiseless exact-gradient PNSGD and the noiseless reflected Euler scheme
agree bitwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import SymMatrix
from .objectives import (DiffusionSpec, ObjectiveSpec, draw_xi, phi_values,
                         stochastic_phi)
from .parallel import ordered_map
from .reflect import (StepSchedule, Trajectory, _full, _upper, pair_streams,
                      reflected_euler)
from .streams import as_stream

__all__ = ["Trajectory", "pgd_run", "pnsgd_run", "interpolate", "coupled_run",
           "coupling_experiment", "active_set", "zero_noise_flow", "OutOfHorizon"]

BOUNDARY_TOL = 1e-12


class OutOfHorizon(ValueError):
    pass


def _snaps(K, every):
    return sorted(set(range(0, K + 1, every)) | {K})


def pgd_run(spec: ObjectiveSpec, A0: SymMatrix, schedule: StepSchedule, every: int = 1) -> Trajectory:
    """V_{k+1} = P(V_k - tau_k * n**2 grad R_n(V_k))."""
    return pnsgd_run(spec, DiffusionSpec(0.0), A0, schedule, rng=0, exact_gradient=True,
                     every=every, kind="pgd")


def pnsgd_run(spec: ObjectiveSpec, diff: DiffusionSpec, A0: SymMatrix, schedule: StepSchedule,
              rng=0, exact_gradient: bool = False, every: int = 1, labels=None,
              increments=None, kind: str = "pnsgd") -> Trajectory:
    """W_{k+1} = P(W_k - tau_k n**2 g_n(W_k; xi_{k+1}) + sqrt(tau_k) Sigma(W_k) o Z_k).

    ``xi`` comes from a sequential generator on the ``"xi"`` child of ``rng``;
    ``Z_k`` for pair (i, j) is a pure function of ``(rng, i, j, k)``.
    ``increments(k)`` may replace ``sqrt(tau_k) Z_k`` (upper-triangle vector),
    which is how the Gaussian coupling feeds in Brownian increments.
    ``labels`` relabels vertices consistently for both noise sources.
    """
    n = A0.n
    lo, hi = A0.box
    stream = as_stream(rng)
    gen = None if exact_gradient or not spec.terms else stream.child("xi").generator()
    inv = None
    if labels is not None:
        inv = np.argsort(np.asarray(labels))
    noisy = not diff.is_zero
    if noisy and increments is None:
        noise = pair_streams(stream, n, labels)

        def increments(k):
            return math.sqrt(schedule.taus[k]) * noise.normal(k)

    K = len(schedule)
    snaps = _snaps(K, every)
    u = _upper(A0.values).copy()
    out = [u.copy()] if 0 in snaps else []
    for k in range(K):
        tau = schedule.taus[k]
        v = _full(u, n)
        if gen is None:
            g = phi_values(v, spec)
        else:
            xi = draw_xi(spec, n, gen)
            if inv is not None:
                xi = inv[xi]
            g = stochastic_phi(v, spec, xi)
        y = u + tau * (-_upper(g))
        if noisy:
            y += _upper(diff.values(v)) * increments(k)
        u = np.minimum(hi, np.maximum(lo, y))
        if k + 1 in snaps:
            out.append(u.copy())
    states = tuple(SymMatrix(_full(x, n), A0.box) for x in out)
    return Trajectory(schedule.times[snaps], states, kind, schedule)


def interpolate(traj: Trajectory, t: float) -> SymMatrix:
    """Right-continuous piecewise-constant interpolation: the state at the largest t_k <= t."""
    times = traj.times
    if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
        raise OutOfHorizon(f"t={t} outside [{times[0]}, {times[-1]}]")
    k = int(np.searchsorted(times, t + 1e-12 * max(1.0, abs(t)), side="right")) - 1
    return traj.states[max(k, 0)]


# -- Gaussian coupling -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CoupledRun:
    pnsgd: Trajectory
    rsde: Trajectory
    sup_err_series: np.ndarray
    fine_times: np.ndarray

    @property
    def sup_err(self) -> float:
        return float(self.sup_err_series.max(initial=0.0))


def coupled_run(spec: ObjectiveSpec, diff: DiffusionSpec, A0: SymMatrix, schedule: StepSchedule,
                fine_factor: int, rng=0, exact_gradient: bool = False, rsde: Trajectory = None
                ) -> CoupledRun:
    """PNSGD and the reflected SDE driven by one Brownian path per coordinate.

    The Brownian path lives on the fine grid (each step split into
    ``fine_factor`` pieces); the normal for fine step ``l`` is keyed by ``l``
    alone, so any two schedules whose fine grids coincide see the same path.
    PNSGD's noise at coarse step k is the Brownian increment over
    [t_k, t_{k+1}]. Returns ``||W(t) - X(t)||_F**2 / n**2`` at every fine time,
    with W piecewise constant. A precomputed ``rsde`` on the same fine grid
    may be passed to avoid recomputing it.
    """
    if fine_factor < 1:
        raise ValueError("fine_factor must be >= 1")
    n = A0.n
    fine = schedule.subdivide(fine_factor)
    stream = as_stream(rng)
    bm = pair_streams(stream, n, tag="bm")
    sq = np.sqrt(fine.taus)

    def increments(k):
        base = k * fine_factor
        return sum(sq[base + r] * bm.normal(base + r) for r in range(fine_factor))

    W = pnsgd_run(spec, diff, A0, schedule, stream, exact_gradient, increments=increments)
    if rsde is None:
        rsde = reflected_euler(spec, diff, A0, fine, noise=None if diff.is_zero else bm)
    X = rsde.values()
    Wv = np.repeat(W.values()[:-1], fine_factor, axis=0)
    Wv = np.concatenate([Wv, W.values()[-1:]])
    err = ((Wv - X) ** 2).sum(axis=(1, 2)) / n ** 2
    return CoupledRun(W, rsde, err, fine.times)


@dataclass(frozen=True)
class CouplingTable:
    rows: tuple  # (rep, tau, sup_err)
    taus: tuple
    mean: tuple
    se: tuple

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("rep,tau,sup_err\n")
            for rep, tau, err in self.rows:
                fh.write(f"{rep},{float(tau)!r},{float(err)!r}\n")

    def summary(self) -> dict:
        return {"taus": list(self.taus), "mean": list(self.mean), "se": list(self.se)}


def coupling_experiment(spec: ObjectiveSpec, diff: DiffusionSpec, A0: SymMatrix, taus, horizon: float,
                        reps: int, fine_factor: int = 4, rng=0, threads: int = 1,
                        exact_gradient: bool = False) -> CouplingTable:
    """Sup-errors of the coupling for several constant step sizes.

    All step sizes share the fine step ``min(taus) / fine_factor``, so every
    replicate's Brownian path (and reflected SDE solution) is the same for
    all step sizes; only the PNSGD side changes with tau.
    """
    taus = tuple(float(t) for t in taus)
    h = min(taus) / fine_factor
    factors = []
    for tau in taus:
        f = round(tau / h)
        if abs(f * h - tau) > 1e-9 * tau:
            raise ValueError(f"step {tau} is not a multiple of the fine step {h}")
        factors.append(f)
    base = as_stream(rng)

    def one(rep):
        stream = base.child("rep", rep)
        ref = None
        errs = []
        for tau, f in zip(taus, factors):
            sched = StepSchedule.constant(tau, horizon)
            fine = sched.subdivide(f)
            if ref is None or len(ref.states) != len(fine) + 1:
                bm = pair_streams(stream, A0.n, tag="bm")
                ref = reflected_euler(spec, diff, A0, fine, noise=None if diff.is_zero else bm)
            errs.append(coupled_run(spec, diff, A0, sched, f, stream, exact_gradient, rsde=ref).sup_err)
        return errs

    results = ordered_map(one, range(reps), threads)
    rows = tuple((rep, tau, e) for rep, errs in enumerate(results) for tau, e in zip(taus, errs))
    arr = np.array(results).reshape(reps, len(taus))
    mean = tuple(float(x) for x in arr.mean(axis=0))
    se = tuple(float(x) for x in (arr.std(axis=0, ddof=1) / math.sqrt(reps) if reps > 1 else np.zeros(len(taus))))
    return CouplingTable(rows, taus, mean, se)


# -- zero-noise flow -------------------------------------------------------------

def active_set(A: SymMatrix, spec: ObjectiveSpec) -> np.ndarray:
    """Coordinates allowed to move: interior ones, and boundary ones whose descent points inward."""
    v = A.values
    lo, hi = A.box
    g = phi_values(v, spec)
    at_hi = v >= hi - BOUNDARY_TOL
    at_lo = v <= lo + BOUNDARY_TOL
    return (~at_hi & ~at_lo) | (at_hi & (g > 0)) | (at_lo & (g < 0))


def zero_noise_flow(spec: ObjectiveSpec, A0: SymMatrix, dt: float, horizon: float,
                    method: str = "indicator", every: int = 1) -> Trajectory:
    """Explicit Euler for dX = -n**2 grad R_n(X) o 1_{G_n(X)} dt, with clamping.

    ``method="indicator"`` freezes inactive coordinates and books the
    suppressed outward push as local time; ``method="reflected"`` runs the
    reflected scheme without noise. In both, ``X(t) = X(0) - int phi + L^- - L^+``
    holds exactly on the grid.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    sched = StepSchedule.constant(dt, horizon)
    if method == "reflected":
        tr = reflected_euler(spec, DiffusionSpec(0.0), A0, sched, record_local_times=True, every=every)
        return Trajectory(tr.times, tr.states, "flow", sched, tr.l_lower, tr.l_upper)
    if method != "indicator":
        raise ValueError(f"unknown method {method!r}")
    n = A0.n
    lo, hi = A0.box
    K = len(sched)
    snaps = _snaps(K, every)
    x = A0.values.copy()
    lm = np.zeros_like(x)
    lp = np.zeros_like(x)
    rec = [(x.copy(), lm.copy(), lp.copy())] if 0 in snaps else []
    for k in range(K):
        tau = sched.taus[k]
        g = phi_values(x, spec)
        step = tau * (-g)
        at_hi = x >= hi - BOUNDARY_TOL
        at_lo = x <= lo + BOUNDARY_TOL
        active = (~at_hi & ~at_lo) | (at_hi & (g > 0)) | (at_lo & (g < 0))
        blocked_hi = at_hi & ~active
        blocked_lo = at_lo & ~active
        lp += np.where(blocked_hi, step, 0.0)
        lm += np.where(blocked_lo, -step, 0.0)
        y = x + np.where(active, step, 0.0)
        # an interior coordinate may overshoot within one step
        lp += np.maximum(y - hi, 0.0)
        lm += np.maximum(lo - y, 0.0)
        x = np.minimum(hi, np.maximum(lo, y))
        if k + 1 in snaps:
            rec.append((x.copy(), lm.copy(), lp.copy()))
    states = tuple(SymMatrix(r[0], A0.box) for r in rec)
    return Trajectory(sched.times[snaps], states, "flow", sched,
                      np.stack([r[1] for r in rec]), np.stack([r[2] for r in rec]))
