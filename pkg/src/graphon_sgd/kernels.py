"""Symmetric matrices, step kernels and the norms that compare them.

A symmetric ``n x n`` matrix ``A`` is identified with the step kernel that is
constant, equal to ``A[i, j]``, on the cell ``V_i x V_j`` of the equipartition
of ``[0, 1]`` into ``n`` intervals. Norms are taken over the whole square, so
``||A||_F**2 == n**2 * l2_norm(embed_K(A))**2``.

Kernels of different resolutions are only ever combined on their exact common
refinement (the lcm of the resolutions).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .streams import as_stream

EXACT_CUT_LIMIT = 20
EXACT_DIST_LIMIT = 8
SYM_TOL = 1e-12


class ResolutionTooLarge(ValueError):
    pass


class NotSymmetric(ValueError):
    pass


def _frozen(values, box, name):
    v = np.array(values, dtype=float)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise ValueError(f"{name} values must be a square 2-d array, got shape {v.shape}")
    lo, hi = float(box[0]), float(box[1])
    if not lo < hi:
        raise ValueError(f"box must satisfy lo < hi, got {box}")
    if np.abs(v - v.T).max(initial=0.0) > SYM_TOL * max(1.0, np.abs(v).max(initial=0.0)):
        raise NotSymmetric(f"{name} is not symmetric")
    # storage is the upper triangle, mirrored
    iu = np.triu_indices(v.shape[0], 1)
    v.T[iu] = v[iu]
    if v.size and (v.min() < lo - 1e-12 or v.max() > hi + 1e-12):
        raise ValueError(f"{name} values leave the box [{lo}, {hi}]")
    v.setflags(write=False)
    return v, (lo, hi)


@dataclass(frozen=True, eq=False)
class SymMatrix:
    """Symmetric real matrix with every entry in ``box``."""

    values: np.ndarray
    box: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        v, box = _frozen(self.values, self.box, "SymMatrix")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "box", box)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def permuted(self, perm) -> "SymMatrix":
        p = np.asarray(perm)
        return SymMatrix(self.values[np.ix_(p, p)], self.box)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


@dataclass(frozen=True, eq=False)
class StepKernel:
    """Kernel constant on the cells of the ``m``-equipartition of ``[0,1]^2``."""

    values: np.ndarray
    box: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        v, box = _frozen(self.values, self.box, "StepKernel")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "box", box)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @classmethod
    def constant(cls, c: float, m: int = 1, box=(-1.0, 1.0)) -> "StepKernel":
        return cls(np.full((m, m), float(c)), box)

    @classmethod
    def from_function(cls, f, m: int, box=(-1.0, 1.0)) -> "StepKernel":
        """Discretise ``f(x, y)`` at cell midpoints."""
        mid = (np.arange(m) + 0.5) / m
        v = f(mid[:, None], mid[None, :]) * np.ones((m, m))
        return cls(0.5 * (v + v.T), box)

    def __call__(self, x, y):
        m = self.m
        i = np.minimum((np.asarray(x) * m).astype(int), m - 1)
        j = np.minimum((np.asarray(y) * m).astype(int), m - 1)
        return self.values[i, j]

    def refine(self, r: int) -> "StepKernel":
        return StepKernel(_refine(self.values, r), self.box)

    def permuted(self, perm) -> "StepKernel":
        p = np.asarray(perm)
        return StepKernel(self.values[np.ix_(p, p)], self.box)

    def __sub__(self, other: "StepKernel") -> "StepKernel":
        a, b = common_refinement(self, other)
        lo = self.box[0] - other.box[1]
        hi = self.box[1] - other.box[0]
        return StepKernel(a - b, (lo, hi))

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


@dataclass(frozen=True)
class CutWitness:
    """Sets realising a cut-norm value: ``value == |sum W[S x T]| / m**2``."""

    value: float
    row_set: tuple[int, ...] = field(default_factory=tuple)
    col_set: tuple[int, ...] = field(default_factory=tuple)


def _refine(v: np.ndarray, r: int) -> np.ndarray:
    if r == 1:
        return v
    return np.repeat(np.repeat(v, r, axis=-2), r, axis=-1)


def common_refinement(W1: StepKernel, W2: StepKernel) -> tuple[np.ndarray, np.ndarray]:
    L = math.lcm(W1.m, W2.m)
    return _refine(W1.values, L // W1.m), _refine(W2.values, L // W2.m)


def embed_K(A: SymMatrix) -> StepKernel:
    return StepKernel(A.values, A.box)


def _overlap(n: int, m: int) -> np.ndarray:
    """(n, m) matrix of the fraction of n-cell i covered by m-cell a."""
    L = math.lcm(n, m)
    fine_n = np.arange(L) // (L // n)
    fine_m = np.arange(L) // (L // m)
    P = np.zeros((n, m))
    np.add.at(P, (fine_n, fine_m), 1.0)
    return P / (L // n)


def restrict_values(v: np.ndarray, n: int) -> np.ndarray:
    """Cell averages of an (..., m, m) step kernel array over the n-grid."""
    m = v.shape[-1]
    if m == n:
        return v.copy()
    if m % n == 0:
        r = m // n
        return v.reshape(*v.shape[:-2], n, r, n, r).mean(axis=(-3, -1))
    P = _overlap(n, m)
    return P @ v @ P.T


def restrict_Mn(W: StepKernel, n: int) -> SymMatrix:
    """L2 projection of ``W`` onto kernels constant on the n-grid, as a matrix."""
    v = restrict_values(W.values, n)
    return SymMatrix(np.clip(v, *W.box), W.box)


def l2_norm(W: StepKernel) -> float:
    return float(np.sqrt(np.mean(np.square(W.values))))


def l1_norm(W: StepKernel) -> float:
    return float(np.mean(np.abs(W.values)))


def linf_norm(W: StepKernel) -> float:
    return float(np.abs(W.values).max())


def l2_dist(W1: StepKernel, W2: StepKernel) -> float:
    a, b = common_refinement(W1, W2)
    return float(np.sqrt(np.mean(np.square(a - b))))


def _subset_matrix(m: int) -> np.ndarray:
    """All 2**m subsets of [m] as rows of a 0/1 matrix, row index = bitmask."""
    masks = np.arange(2 ** m, dtype=np.int64)
    return ((masks[:, None] >> np.arange(m)) & 1).astype(float)


def _best_T(colsums: np.ndarray):
    pos = np.where(colsums > 0, colsums, 0.0).sum(axis=-1)
    neg = -np.where(colsums < 0, colsums, 0.0).sum(axis=-1)
    return pos, neg


def cut_norm_values(v: np.ndarray) -> float:
    """Exact cut norm of an (m, m) array read as a step kernel."""
    m = v.shape[0]
    if m > EXACT_CUT_LIMIT:
        raise ResolutionTooLarge(f"exact cut norm limited to m <= {EXACT_CUT_LIMIT}, got {m}")
    best = 0.0
    chunk = 1 << 14
    for start in range(0, 2 ** m, chunk):
        masks = np.arange(start, min(start + chunk, 2 ** m), dtype=np.int64)
        S = ((masks[:, None] >> np.arange(m)) & 1).astype(float)
        pos, neg = _best_T(S @ v)
        best = max(best, pos.max(), neg.max())
    return best / m ** 2


def cut_norm_exact(W: StepKernel, limit: int = EXACT_CUT_LIMIT) -> tuple[float, CutWitness]:
    """Exact cut norm by enumerating row sets and choosing columns greedily.

    A rectangle over measurable sets is bilinear in the occupancy fraction of
    each cell, so some union of grid cells attains the supremum. Ties are
    broken by the smallest row bitmask; the column set keeps only columns
    with a strictly signed contribution.
    """
    v = W.values
    m = v.shape[0]
    if m > limit:
        raise ResolutionTooLarge(f"exact cut norm limited to m <= {limit}, got {m}")
    best, best_mask, best_sign = -1.0, 0, 1
    chunk = 1 << 14
    for start in range(0, 2 ** m, chunk):
        masks = np.arange(start, min(start + chunk, 2 ** m), dtype=np.int64)
        S = ((masks[:, None] >> np.arange(m)) & 1).astype(float)
        pos, neg = _best_T(S @ v)
        for arr, sign in ((pos, 1), (neg, -1)):
            k = int(np.argmax(arr))
            if arr[k] > best * (1 + 1e-12) + 1e-300:
                best, best_mask, best_sign = float(arr[k]), int(masks[k]), sign
    rows = tuple(i for i in range(m) if best_mask >> i & 1)
    colsums = v[list(rows)].sum(axis=0) if rows else np.zeros(m)
    cols = tuple(int(j) for j in np.flatnonzero(best_sign * colsums > 0))
    value = abs(v[np.ix_(rows, cols)].sum()) / m ** 2 if rows and cols else 0.0
    return value, CutWitness(value, rows, cols)


def _alternate(v, s_mask, sign, max_rounds=100):
    m = v.shape[0]
    S = s_mask.astype(float)
    T = np.zeros(m)
    val = -np.inf
    for _ in range(max_rounds):
        T = (sign * (S @ v) > 0).astype(float)
        S_new = (sign * (v @ T) > 0).astype(float)
        new_val = sign * (S_new @ v @ T)
        if new_val <= val + 1e-15:
            break
        S, val = S_new, new_val
    T = (sign * (S @ v) > 0).astype(float)
    return float(sign * (S @ v @ T)), S, T


def cut_norm_heuristic(W: StepKernel, restarts: int = 20, rng=0) -> tuple[float, CutWitness]:
    """Lower bound on the cut norm by alternating maximisation.

    Fixing the row set, the best column set takes every column whose sum has
    the chosen sign, and vice versa; alternate to a local optimum. Starts from
    all rows, from the rows with positive sums, and from ``restarts`` random
    row sets; both signs are tried.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    v = W.values
    m = v.shape[0]
    gen = as_stream(rng).child("cut-heuristic").generator()
    starts = [np.ones(m, bool), v.sum(axis=1) > 0, v.sum(axis=1) < 0]
    starts += [gen.random(m) < 0.5 for _ in range(restarts)]
    best = (0.0, np.zeros(m), np.zeros(m))
    for s in starts:
        for sign in (1.0, -1.0):
            val, S, T = _alternate(v, s, sign)
            if val > best[0] + 1e-15:
                best = (val, S, T)
    val, S, T = best
    rows = tuple(int(i) for i in np.flatnonzero(S))
    cols = tuple(int(j) for j in np.flatnonzero(T))
    value = abs(v[np.ix_(rows, cols)].sum()) / m ** 2 if rows and cols else 0.0
    return value, CutWitness(value, rows, cols)


def _exact_many(D: np.ndarray) -> np.ndarray:
    """Exact cut norms of a stack (P, m, m) of small arrays."""
    m = D.shape[-1]
    S = _subset_matrix(m)
    rows = np.einsum("sm,pmk->psk", S, D)
    pos, neg = _best_T(rows)
    return np.maximum(pos.max(axis=1), neg.max(axis=1)) / m ** 2 + 0.0  # no negative zero


def cut_dist(W1: StepKernel, W2: StepKernel, mode: str = "heuristic", rng=0,
             restarts: int = 10) -> float:
    """Upper bound on the cut distance over cell permutations of the common refinement.

    ``exact`` minimises the exact cut norm of the difference over every
    permutation (refined resolution at most 8). ``heuristic`` aligns by the
    sorted degree sequence and then does greedy pairwise-swap descent.
    """
    a, b = common_refinement(W1, W2)
    L = a.shape[0]
    if mode == "exact":
        if max(W1.m, W2.m, L) > EXACT_DIST_LIMIT:
            raise ResolutionTooLarge(f"exact cut distance limited to resolution {EXACT_DIST_LIMIT}")
        perms = np.array(list(itertools.permutations(range(L))))
        best = np.inf
        for start in range(0, len(perms), 4096):
            p = perms[start:start + 4096]
            D = a[None] - b[p[:, :, None], p[:, None, :]]
            best = min(best, float(_exact_many(D).min()))
        return best
    if mode != "heuristic":
        raise ValueError(f"unknown mode {mode!r}")

    def estimate(p):
        d = a - b[np.ix_(p, p)]
        if L <= 12:
            return cut_norm_values(d)
        return cut_norm_heuristic(StepKernel(d, (-np.inf, np.inf)), restarts, rng)[0]

    # put the k-th smallest degree of b where a has its k-th smallest
    p = np.empty(L, dtype=int)
    p[np.argsort(a.sum(axis=1), kind="stable")] = np.argsort(b.sum(axis=1), kind="stable")
    cur = estimate(p)
    improved = True
    while improved and cur > 0:
        improved = False
        for i in range(L):
            for j in range(i + 1, L):
                q = p.copy()
                q[i], q[j] = q[j], q[i]
                val = estimate(q)
                if val < cur - 1e-15:
                    p, cur, improved = q, val, True
    d = a - b[np.ix_(p, p)]
    if L <= EXACT_CUT_LIMIT:
        return cut_norm_values(d)
    return cur


def sample_matrix(W: StepKernel, k: int, rng=0) -> tuple[SymMatrix, np.ndarray]:
    """Draw ``U_1..U_k`` uniform and return ``(W(U_i, U_j))`` with the points."""
    if k < 2:
        raise ValueError("k must be >= 2")
    U = as_stream(rng).child("sample-matrix").generator().random(k)
    idx = np.minimum((U * W.m).astype(int), W.m - 1)
    return SymMatrix(W.values[np.ix_(idx, idx)], W.box), U


def write_csv(obj, path) -> None:
    """Dense row-major CSV with a ``# sym n=<n> box=<lo>,<hi>`` header."""
    v = obj.values
    lo, hi = obj.box
    lines = [f"# sym n={v.shape[0]} box={float(lo)!r},{float(hi)!r}"]
    lines += [",".join(repr(float(x)) for x in row) for row in v]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path, kind=SymMatrix):
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# sym"):
            raise ValueError(f"{path}: missing '# sym' header")
        fields = dict(tok.split("=", 1) for tok in header[5:].split())
        n = int(fields["n"])
        lo, hi = (float(x) for x in fields["box"].split(","))
        v = np.loadtxt(fh, delimiter=",", ndmin=2)
    if v.shape != (n, n):
        raise ValueError(f"{path}: expected {n}x{n} values, got {v.shape}")
    if np.abs(v - v.T).max() > SYM_TOL:
        raise NotSymmetric(f"{path}: asymmetry above {SYM_TOL}")
    return kind(0.5 * (v + v.T), (lo, hi))
