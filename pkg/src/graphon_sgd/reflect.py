"""Two-sided Skorokhod reflection on an interval and the projected Euler scheme.

The discrete scheme is "step, then clamp": the amount clipped off at a
barrier is that step's local-time increment. For drivers with piecewise
constant increments this is the exact two-sided Skorokhod solution at the
grid times.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import SymMatrix
from .objectives import DiffusionSpec, ObjectiveSpec, phi_values
from .streams import Stream, as_stream


class StartOutsideBox(ValueError):
    pass


def clamp_P(x, box):
    lo, hi = box
    if np.ndim(x) == 0:
        return min(hi, max(lo, float(x)))
    return np.minimum(hi, np.maximum(lo, x))


def skorokhod_step(x, dy, box):
    """One projected step: returns ``(x', dL_lower, dL_upper)``."""
    lo, hi = box
    y = x + dy
    if np.ndim(y) == 0:
        return clamp_P(y, box), max(lo - y, 0.0), max(y - hi, 0.0)
    return np.minimum(hi, np.maximum(lo, y)), np.maximum(lo - y, 0.0), np.maximum(y - hi, 0.0)


@dataclass(frozen=True)
class SkorokhodTriple:
    times: np.ndarray
    x: np.ndarray
    l_lower: np.ndarray
    l_upper: np.ndarray


def skorokhod_map(times, y, box) -> SkorokhodTriple:
    """Reflect the driver ``y`` (time along axis 0) into ``box``."""
    y = np.asarray(y, dtype=float)
    lo, hi = box
    if np.any((y[0] < lo) | (y[0] > hi)):
        raise StartOutsideBox(f"driver starts at {y[0]} outside [{lo}, {hi}]")
    x = np.empty_like(y)
    lm = np.zeros_like(y)
    lp = np.zeros_like(y)
    x[0] = y[0]
    dy = np.diff(y, axis=0)
    for k in range(len(dy)):
        x[k + 1], a, b = skorokhod_step(x[k], dy[k], box)
        lm[k + 1] = lm[k] + a
        lp[k + 1] = lp[k] + b
    return SkorokhodTriple(np.asarray(times, dtype=float), x, lm, lp)


@dataclass(frozen=True)
class StepSchedule:
    taus: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.taus, dtype=float).reshape(-1)
        if np.any(t <= 0) or not np.all(np.isfinite(t)):
            raise ValueError("step sizes must be positive and finite")
        t.setflags(write=False)
        object.__setattr__(self, "taus", t)

    @classmethod
    def constant(cls, tau: float, horizon: float) -> "StepSchedule":
        if horizon < 0 or tau <= 0:
            raise ValueError("need tau > 0 and horizon >= 0")
        k = max(1, math.ceil(horizon / tau - 1e-9)) if horizon > 0 else 0
        return cls(np.full(k, float(tau)))

    @classmethod
    def geometric(cls, tau0: float, ratio: float, horizon: float, max_steps: int = 10**7):
        taus, total = [], 0.0
        while total < horizon * (1 - 1e-12):
            if len(taus) >= max_steps:
                raise ValueError("geometric schedule does not reach the horizon")
            taus.append(tau0 * ratio ** len(taus))
            total += taus[-1]
        return cls(np.array(taus))

    @property
    def times(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.taus)])

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def sup(self) -> float:
        return float(self.taus.max(initial=0.0))

    def __len__(self):
        return len(self.taus)

    def subdivide(self, f: int) -> "StepSchedule":
        return StepSchedule(np.repeat(self.taus / f, f))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States of a matrix dynamic at recorded times (plus cumulative local times)."""

    times: np.ndarray
    states: tuple
    kind: str
    schedule: StepSchedule = None
    l_lower: np.ndarray = None
    l_upper: np.ndarray = None

    @property
    def n(self) -> int:
        return self.states[0].n

    @property
    def box(self):
        return self.states[0].box

    def values(self) -> np.ndarray:
        return np.stack([s.values for s in self.states])


def write_trajectory(traj: Trajectory, path) -> None:
    """Long format ``t,i,j,x[,lminus,lplus]`` over the upper triangle, 1-based."""
    n = traj.n
    iu, ju = np.triu_indices(n)
    lt = traj.l_lower is not None
    with open(path, "w") as fh:
        fh.write("t,i,j,x" + (",lminus,lplus" if lt else "") + "\n")
        for s, (t, A) in enumerate(zip(traj.times, traj.states)):
            for i, j in zip(iu, ju):
                row = f"{float(t)!r},{i + 1},{j + 1},{float(A.values[i, j])!r}"
                if lt:
                    row += f",{float(traj.l_lower[s, i, j])!r},{float(traj.l_upper[s, i, j])!r}"
                fh.write(row + "\n")


def read_trajectory(path, box, kind="rsde") -> Trajectory:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    times = np.unique(data[:, 0])
    n = int(data[:, 1].max())
    cube = np.zeros((len(times), 3, n, n))
    idx = np.searchsorted(times, data[:, 0])
    i = data[:, 1].astype(int) - 1
    j = data[:, 2].astype(int) - 1
    for c in range(min(3, data.shape[1] - 3)):
        cube[idx, c, i, j] = data[:, 3 + c]
        cube[idx, c, j, i] = data[:, 3 + c]
    states = tuple(SymMatrix(cube[s, 0], box) for s in range(len(times)))
    if data.shape[1] > 4:
        return Trajectory(times, states, kind, None, cube[:, 1], cube[:, 2])
    return Trajectory(times, states, kind)


# -- integrators ---------------------------------------------------------------

def euler_paths(x0, schedule: StepSchedule, box, drift=None, sigma=None, noise: Stream = None,
                snapshots=None, observe=None, step_offset: int = 0):
    """Batch projected Euler for independent one-dimensional reflected diffusions.

    ``drift(x, k, t)`` and ``sigma(x, k, t)`` give per-path coefficients (or
    ``None`` for zero). ``noise`` is a stream whose state has the batch shape;
    step ``k`` uses ``noise.normal(step_offset + k)``. At every step index in
    ``snapshots`` (0 = start, len(schedule) = end) ``observe(x, lm, lp)`` is
    called on the running state and cumulative local times; its results are
    returned in order. Without ``observe`` copies of the state are returned.
    """
    x = np.array(x0, dtype=float)
    lo, hi = box
    if np.any((x < lo) | (x > hi)):
        raise StartOutsideBox("initial values leave the box")
    lm = np.zeros_like(x)
    lp = np.zeros_like(x)
    K = len(schedule)
    snaps = set(range(K + 1)) if snapshots is None else set(snapshots)
    if observe is None:
        observe = lambda x, a, b: (x.copy(), a.copy(), b.copy())  # noqa: E731
    out = []
    times = schedule.times
    if 0 in snaps:
        out.append(observe(x, lm, lp))
    for k in range(K):
        tau = schedule.taus[k]
        y = x.copy()
        if drift is not None:
            y += tau * drift(x, k, times[k])
        if sigma is not None and noise is not None:
            y += sigma(x, k, times[k]) * (math.sqrt(tau) * noise.normal(step_offset + k))
        x = np.minimum(hi, np.maximum(lo, y))
        lm += np.maximum(lo - y, 0.0)
        lp += np.maximum(y - hi, 0.0)
        if k + 1 in snaps:
            out.append(observe(x, lm, lp))
    return out


def pair_streams(rng, n: int, labels=None, tag="noise") -> Stream:
    """One stream per unordered coordinate pair of the upper triangle.

    ``labels`` renames the coordinates (for permutation-equivariance checks):
    pair ``(i, j)`` draws from the key of ``(labels[i], labels[j])`` sorted.
    """
    iu, ju = np.triu_indices(n)
    lab = np.arange(n) if labels is None else np.asarray(labels)
    a, b = lab[iu], lab[ju]
    return as_stream(rng).child(tag, np.minimum(a, b), np.maximum(a, b))


def _upper(v):
    n = v.shape[-1]
    return v[..., np.triu_indices(n)[0], np.triu_indices(n)[1]]


def _full(u, n):
    iu, ju = np.triu_indices(n)
    v = np.empty(u.shape[:-1] + (n, n))
    v[..., iu, ju] = u
    v[..., ju, iu] = u
    return v


def reflected_euler(spec: ObjectiveSpec, diff: DiffusionSpec, A0: SymMatrix, schedule: StepSchedule,
                    rng=0, record_local_times: bool = False, every: int = 1, labels=None,
                    noise: Stream = None, step_offset: int = 0) -> Trajectory:
    """Projected Euler for the matrix reflected SDE.

    Coordinates are the upper triangle with the diagonal; the drift
    ``-n**2 grad R_n = -phi`` is evaluated once per step on the full matrix.
    The noise for pair ``(i, j)`` at step ``k`` is a pure function of
    ``(rng, i, j, step_offset + k)``.
    """
    n = A0.n
    box = A0.box
    if noise is None and not diff.is_zero:
        noise = pair_streams(rng, n, labels)
    K = len(schedule)
    snaps = sorted(set(range(0, K + 1, every)) | {K})

    def drift(u, k, t):
        return -_upper(phi_values(_full(u, n), spec))

    sigma = None
    if not diff.is_zero:
        def sigma(u, k, t):
            return _upper(diff.values(_full(u, n)))

    out = euler_paths(_upper(A0.values), schedule, box, drift if spec.terms or spec.entropy_weight else None,
                      sigma, noise, snaps, step_offset=step_offset)
    times = schedule.times[snaps]
    states = tuple(SymMatrix(_full(x, n), box) for x, _, _ in out)
    if record_local_times:
        lm = np.stack([_full(a, n) for _, a, _ in out])
        lp = np.stack([_full(b, n) for _, _, b in out])
        return Trajectory(times, states, "rsde", schedule, lm, lp)
    return Trajectory(times, states, "rsde", schedule)
