"""Permutation-invariant objectives on kernels and their matrix restrictions.

An objective is

    R(W) = 1/2 * sum_a w_a (H_{F_a}(W) - c_a)**2 + psi' * int h(W)

with ``H_F`` the homomorphism density of a simple graph and ``h`` the scalar
entropy ``p log p + (1-p) log(1-p)``. Its first variation ``phi(W)`` is a
kernel, and for a symmetric matrix ``A``

    n**2 * grad R_n(A) == phi(K(A)) read off at the cells,

where the gradient treats the ``n**2`` entries as separate coordinates (so a
symmetric perturbation ``E_ij + E_ji`` moves ``R_n`` by twice the entry).

Densities on step kernels are computed exactly by contracting one copy of
the kernel per edge with ``numpy.einsum``; the contraction order is chosen by
numpy's path optimiser, so the cost is exponential only in the width of that
order, not in the number of vertices.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .kernels import StepKernel, SymMatrix
from .streams import as_stream

_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


class DomainError(ValueError):
    pass


class EdgeNotInGraph(KeyError):
    pass


@dataclass(frozen=True)
class SimpleGraph:
    k: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        norm = []
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            if not (0 <= u < self.k and 0 <= v < self.k):
                raise ValueError(f"edge ({u}, {v}) has an endpoint outside [0, {self.k})")
            norm.append((min(u, v), max(u, v)))
        if len(set(norm)) != len(norm):
            raise ValueError("duplicate edge")
        object.__setattr__(self, "edges", tuple(norm))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def without(self, e) -> "SimpleGraph":
        e = (min(e), max(e))
        if e not in self.edges:
            raise EdgeNotInGraph(e)
        return SimpleGraph(self.k, tuple(x for x in self.edges if x != e))

    @classmethod
    def edge(cls):
        return cls(2, ((0, 1),))

    @classmethod
    def triangle(cls):
        return cls(3, ((0, 1), (1, 2), (0, 2)))

    @classmethod
    def cycle(cls, k: int):
        return cls(k, tuple((i, (i + 1) % k) for i in range(k)))

    @classmethod
    def path(cls, k: int):
        return cls(k, tuple((i, i + 1) for i in range(k - 1)))


def read_graph(path) -> SimpleGraph:
    """Edge list, 1-based ``u v`` per line, header ``# graph k=<k>``."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# graph"):
            raise ValueError(f"{path}: missing '# graph' header")
        k = int(dict(t.split("=") for t in header[7:].split())["k"])
        edges = []
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                u, v = line.split()
                edges.append((int(u) - 1, int(v) - 1))
    return SimpleGraph(k, tuple(edges))


def write_graph(F: SimpleGraph, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# graph k={F.k}\n")
        for u, v in F.edges:
            fh.write(f"{u + 1} {v + 1}\n")


# -- exact densities on step kernels ----------------------------------------

_paths: dict = {}


def _einsum(subs, ops):
    key = (subs, tuple(o.shape for o in ops))
    path = _paths.get(key)
    if path is None:
        path = np.einsum_path(subs, *ops, optimize="greedy")[0]
        _paths[key] = path
    return np.einsum(subs, *ops, optimize=path)


def contract(edges, v: np.ndarray, out=()) -> np.ndarray:
    """Integral of prod_{(u,w) in edges} W(x_u, x_w) over the non-output vertices.

    ``v`` is an (..., m, m) array of step kernel values; edges may repeat and
    may be loops (``u == w`` reads the diagonal). Output vertices are pinned
    to cells and become trailing axes, in the order given.
    """
    m = v.shape[-1]
    batch = v.shape[:-2]
    if not edges:
        return np.ones(batch + (m,) * len(out))
    present = {x for e in edges for x in e}
    out_here = [o for o in out if o in present]
    summed = present - set(out)
    subs = ",".join("..." + _LETTERS[u] + _LETTERS[w] for u, w in edges)
    subs += "->..." + "".join(_LETTERS[o] for o in out_here)
    res = _einsum(subs, [v] * len(edges)) / float(m) ** len(summed)
    if len(out_here) != len(out):
        # pinned vertices that touch no edge contribute a constant axis
        idx = tuple(slice(None) if o in present else None for o in out)
        res = np.broadcast_to(res[(Ellipsis,) + idx], batch + (m,) * len(out))
    return res


def _hom(F: SimpleGraph, v):
    return contract(F.edges, v)


def _partial(F: SimpleGraph, e, v):
    p, q = e
    return contract(F.without(e).edges, v, out=(p, q))


def _phi_hom(F: SimpleGraph, v):
    """Symmetrised sum over edges of the pinned densities t_{x,y}(F_e, W)."""
    total = 0.0
    for e in F.edges:
        t = _partial(F, e, v)
        total = total + 0.5 * (t + np.swapaxes(t, -1, -2))
    if isinstance(total, float):
        return np.zeros(v.shape)
    return total


def hom_density(F: SimpleGraph, W) -> float:
    return float(_hom(F, np.asarray(W.values if hasattr(W, "values") else W)))


def partial_density(F: SimpleGraph, e, W, cell=None):
    """t_{x,y}(F_e, W): density of F minus edge e with its endpoints pinned.

    Returns the whole (m, m) array of cell values, or one value if ``cell``
    is given. The first endpoint of ``e`` (as passed) is pinned to the row.
    """
    e = tuple(int(x) for x in e)
    if (min(e), max(e)) not in F.edges:
        raise EdgeNotInGraph(e)
    v = np.asarray(W.values if hasattr(W, "values") else W)
    t = contract(F.without(e).edges, v, out=e)
    if cell is None:
        return t
    return float(t[cell])


# -- objective specification --------------------------------------------------

@dataclass(frozen=True)
class HomTerm:
    graph: SimpleGraph
    target: float
    weight: float = 1.0


@dataclass(frozen=True)
class ObjectiveSpec:
    """``1/2 sum w (H_F - c)**2 + entropy_weight * int h_eps(W)``.

    With ``eps > 0`` the entropy is evaluated through ``h_eps``, equal to ``h``
    on ``[eps, 1-eps]`` and continued linearly (C1) outside, so the value and
    the clamped log-odds derivative stay consistent everywhere in ``[0, 1]``.
    ``eps = 0`` uses the raw entropy and raises on 0/1 entries in ``phi``.
    """

    terms: tuple[HomTerm, ...] = ()
    entropy_weight: float = 0.0
    eps: float = 0.05
    box: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "box", (float(self.box[0]), float(self.box[1])))
        if self.entropy_weight < 0:
            raise ValueError("entropy_weight must be >= 0")
        if not 0 <= self.eps < 0.5:
            raise ValueError("eps must lie in [0, 1/2)")
        if self.entropy_weight > 0 and (self.box[0] < 0 or self.box[1] > 1):
            raise ValueError("entropy needs a box inside [0, 1]")

    @classmethod
    def edge_triangle(cls, e: float, tau: float, psi: float = 4.0, eps: float = 0.05):
        return cls((HomTerm(SimpleGraph.edge(), e), HomTerm(SimpleGraph.triangle(), tau)),
                   entropy_weight=psi, eps=eps, box=(0.0, 1.0))

    @property
    def xi_length(self) -> int:
        return sum(2 * t.graph.k - 2 for t in self.terms)


@dataclass(frozen=True)
class DiffusionSpec:
    """Diffusion coefficient: constant ``beta`` or ``fn(values) -> values``, clipped to ``[0, bound]``."""

    beta: float = 0.0
    fn: object = None
    bound: float = None

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.bound is None:
            object.__setattr__(self, "bound", self.beta if self.fn is None else np.inf)

    @property
    def is_zero(self) -> bool:
        return self.fn is None and self.beta == 0

    def values(self, v: np.ndarray) -> np.ndarray:
        if self.fn is None:
            return np.full(v.shape, float(self.beta))
        return np.clip(self.fn(v), 0.0, self.bound)

    def __call__(self, W):
        v = np.asarray(W.values if hasattr(W, "values") else W)
        return StepKernel(self.values(v), (0.0, max(float(self.bound), 1e-300)))


def _logit(v, spec):
    if spec.eps > 0:
        z = np.clip(v, spec.eps, 1 - spec.eps)
    else:
        if np.any((v <= 0) | (v >= 1)):
            raise DomainError("entropy derivative undefined at 0 or 1 with the clamp disabled")
        z = v
    return np.log(z) - np.log1p(-z)


def _entropy(v, eps):
    if eps <= 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(v > 0, v * np.log(np.where(v > 0, v, 1.0)), 0.0)
            out = out + np.where(v < 1, (1 - v) * np.log(np.where(v < 1, 1 - v, 1.0)), 0.0)
        return out
    z = np.clip(v, eps, 1 - eps)
    h = z * np.log(z) + (1 - z) * np.log1p(-z)
    return h + (np.log(z) - np.log1p(-z)) * (v - z)


def phi_values(v: np.ndarray, spec: ObjectiveSpec) -> np.ndarray:
    """Cell values of phi(W) for an (..., m, m) array of kernel values."""
    total = np.zeros(v.shape)
    for term in spec.terms:
        H = _hom(term.graph, v)
        total = total + (term.weight * (H - term.target))[..., None, None] * _phi_hom(term.graph, v)
    if spec.entropy_weight > 0:
        total = total + spec.entropy_weight * _logit(v, spec)
    return total


def eval_values(v: np.ndarray, spec: ObjectiveSpec) -> np.ndarray:
    val = np.zeros(v.shape[:-2])
    for term in spec.terms:
        val = val + 0.5 * term.weight * (_hom(term.graph, v) - term.target) ** 2
    if spec.entropy_weight > 0:
        val = val + spec.entropy_weight * _entropy(v, spec.eps).mean(axis=(-2, -1))
    return val


def phi(W: StepKernel, spec: ObjectiveSpec) -> StepKernel:
    return StepKernel(phi_values(W.values, spec), (-np.inf, np.inf))


def grad_Rn(A: SymMatrix, spec: ObjectiveSpec) -> SymMatrix:
    """Euclidean gradient of R_n over the n**2 entries: phi(K(A)) / n**2."""
    return SymMatrix(phi_values(A.values, spec) / A.n ** 2, (-np.inf, np.inf))


def eval_Rn(A: SymMatrix, spec: ObjectiveSpec) -> float:
    return float(eval_values(A.values, spec))


# -- stochastic gradient --------------------------------------------------------

def draw_xi(spec: ObjectiveSpec, n: int, gen: np.random.Generator) -> np.ndarray:
    return gen.integers(0, n, size=spec.xi_length)


@lru_cache(maxsize=None)
def _free_vertices(F: SimpleGraph, e):
    return tuple(x for x in range(F.k) if x not in e)


def stochastic_phi(v: np.ndarray, spec: ObjectiveSpec, xi) -> np.ndarray:
    """Unbiased estimate of phi(K(A)) at the cells from index sample ``xi``.

    Per homomorphism term with graph F on k vertices, ``xi`` supplies k
    indices for one copy of F (estimating H_F) followed by k - 2 indices for
    the unpinned vertices of every F - e. For the edge-triangle objective this
    is (i1, i2 | i3, i4, i5 | i6).
    """
    n = v.shape[0]
    xi = np.asarray(xi, dtype=int)
    if xi.shape != (spec.xi_length,):
        raise ValueError(f"xi must have length {spec.xi_length}")
    if np.any((xi < 0) | (xi >= n)):
        raise ValueError("xi indices out of range")
    I = np.arange(n)[:, None]
    J = np.arange(n)[None, :]
    total = np.zeros((n, n))
    pos = 0
    for term in spec.terms:
        F = term.graph
        copy = xi[pos:pos + F.k]
        free = xi[pos + F.k:pos + 2 * F.k - 2]
        pos += 2 * F.k - 2
        H_hat = np.prod([v[copy[a], copy[b]] for a, b in F.edges]) if F.edges else 1.0
        part = np.zeros((n, n))
        for e in F.edges:
            where = {x: free[r] for r, x in enumerate(_free_vertices(F, e))}
            where[e[0]], where[e[1]] = I, J
            P = np.ones((n, n))
            for a, b in F.edges:
                if (a, b) != e:
                    P = P * v[where[a], where[b]]
            part += 0.5 * (P + P.T)
        total += term.weight * (H_hat - term.target) * part
    if spec.entropy_weight > 0:
        total += spec.entropy_weight * _logit(v, spec)
    return total


def stochastic_grad(A: SymMatrix, spec: ObjectiveSpec, xi=None, rng=None) -> SymMatrix:
    """Single-sample unbiased estimate of grad R_n(A).

    Exhaustive averaging over all ``xi`` in ``[n]**xi_length`` reproduces
    ``grad_Rn(A)`` exactly (up to rounding).
    """
    v = A.values
    if spec.entropy_weight > 0 and (v.min() < 0 or v.max() > 1):
        raise DomainError("matrix leaves [0, 1]")
    if xi is None:
        if rng is None:
            raise ValueError("give xi or rng")
        xi = draw_xi(spec, A.n, as_stream(rng).child("xi").generator())
    return SymMatrix(stochastic_phi(v, spec, xi) / A.n ** 2, (-np.inf, np.inf))


def all_xi(spec: ObjectiveSpec, n: int):
    return itertools.product(range(n), repeat=spec.xi_length)


# -- constants -----------------------------------------------------------------

@dataclass(frozen=True)
class LipschitzConstants:
    kappa2: float
    kappa_cut: float
    m_inf: float
    sigma: float
    entropy_L: float = 0.0
    per_term: tuple[float, ...] = field(default_factory=tuple)


def lipschitz_constants(spec: ObjectiveSpec) -> LipschitzConstants:
    """Bounds on phi for kernels in the spec's box.

    Per homomorphism term with m edges, t_{x,y}(F_e, .) is (m-1)-Lipschitz so
    phi_{H_F} is m(m-1)-Lipschitz (``per_term``); the product rule with
    |H - c| <= r and ||phi_H|| <= m gives r*m(m-1) + m**2 per term, both in L2
    and in cut norm. The entropy contributes 2 psi' / (eps (1-eps)) to the L2
    constant and psi' / (eps (1-eps)) to the pointwise constant ``entropy_L``.
    """
    lo, hi = spec.box
    B = max(1.0, abs(lo), abs(hi))
    kappa2 = kappa_cut = m_inf = 0.0
    per_term = []
    for term in spec.terms:
        m = term.graph.num_edges
        if m == 0:
            per_term.append(0.0)
            continue
        hmax = max(abs(lo), abs(hi)) ** m
        hmin = lo ** m if lo >= 0 else -hmax
        r = max(abs(hmax - term.target), abs(hmin - term.target))
        k2 = m * (m - 1) * B ** max(m - 2, 0)
        per_term.append(float(k2))
        w = abs(term.weight)
        kappa2 += w * (r * k2 + (m * B ** (m - 1)) ** 2)
        kappa_cut += w * (r * k2 + (m * B ** (m - 1)) ** 2)
        m_inf += w * r * m * B ** (m - 1)
    L = 0.0
    if spec.entropy_weight > 0:
        eps = spec.eps if spec.eps > 0 else math.nan
        L = spec.entropy_weight / (eps * (1 - eps))
        kappa2 += 2 * L
        m_inf += spec.entropy_weight * math.log((1 - eps) / eps)
    return LipschitzConstants(kappa2, kappa_cut, m_inf, m_inf, L, tuple(per_term))
