"""Power counting on labelled graphs for long-horizon moment bounds.

A labelled graph carries two exponents per edge: alpha_minus controls the
kernel's singularity at zero (short-distance/Weinberg counting, "regular"),
alpha_plus its decay at infinity (large-scale counting over tight partitions,
"integrable").  The cumulant-graph constructor encodes products of pair
kernels |t|^{2H-2} and exponentially-decaying cumulant cliques; a spanning
forest over the quotient by the clique partition yields the extra decay
weighting that certifies the bound exponent.  Quadrature helpers evaluate the
pair-moment integrals that the counting machinery bounds, against the
stationary-covariance main term.

Convention on ties: the regularity condition requires a strict "> 1" and the
integrability condition a strict "< 1"; boundary cases count as violations.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import roots_jacobi, roots_legendre

from .chain import (
    ChainModel,
    _partitions_cached,
    _set_partitions,
    _spectral_data,
    fractional_power,
    mobius_coefficient,
    sup_norm,
)
from .diffusion import raw_kernel_covariance

__all__ = [
    "LabelledGraph",
    "labelled_graph",
    "component_labels",
    "is_regular",
    "tight_partitions",
    "is_integrable",
    "BoundReport",
    "bound_exponent",
    "CumulantGraph",
    "build_cumulant_graph",
    "ForestBound",
    "spanning_forest_beta",
    "iter_pairings",
    "iter_singleton_free_partitions",
    "enumerate_pairings_partitions",
    "joint_moment_batch",
    "joint_cumulant_batch",
    "i2p_quadrature",
    "i2p_partition_sum",
    "MainTermReport",
    "main_term_check",
    "parse_graph_text",
]

_MAX_SUBSET_VERTICES = 20
_MAX_PARTITION_VERTICES = 12
_MAX_PAIRS = 4


@dataclass(frozen=True)
class LabelledGraph:
    """Oriented multigraph with nonpositive edge exponents.

    edges[k] = (e_minus, e_plus); self-loops are rejected.  kernel_norms is an
    optional positive weight per edge carried along for bound bookkeeping.
    """

    n_vertices: int
    edges: tuple
    alpha_minus: tuple
    alpha_plus: tuple
    kernel_norms: tuple | None


def labelled_graph(n_vertices, edges, alpha_minus, alpha_plus, kernel_norms=None) -> LabelledGraph:
    n = int(n_vertices)
    if n < 1:
        raise ValueError("need at least one vertex")
    edges = tuple((int(u), int(v)) for u, v in edges)
    for u, v in edges:
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"edge ({u}, {v}) out of range")
        if u == v:
            raise ValueError(f"self-loop at vertex {u}")
    alpha_minus = tuple(float(a) for a in alpha_minus)
    alpha_plus = tuple(float(a) for a in alpha_plus)
    if len(alpha_minus) != len(edges) or len(alpha_plus) != len(edges):
        raise ValueError("one exponent pair per edge")
    if any(a > 0.0 for a in alpha_minus) or any(a > 0.0 for a in alpha_plus):
        raise ValueError("edge exponents must be nonpositive")
    if kernel_norms is not None:
        kernel_norms = tuple(float(c) for c in kernel_norms)
        if len(kernel_norms) != len(edges):
            raise ValueError("one kernel norm per edge")
        if any(c <= 0.0 for c in kernel_norms):
            raise ValueError("kernel norms must be positive")
    return LabelledGraph(
        n_vertices=n,
        edges=edges,
        alpha_minus=alpha_minus,
        alpha_plus=alpha_plus,
        kernel_norms=kernel_norms,
    )


def component_labels(graph: LabelledGraph) -> np.ndarray:
    """Connected-component id per vertex (orientation ignored)."""
    n = graph.n_vertices
    adj = [[] for _ in range(n)]
    for u, v in graph.edges:
        adj[u].append(v)
        adj[v].append(u)
    labels = np.full(n, -1, dtype=np.int64)
    comp = 0
    for start in range(n):
        if labels[start] >= 0:
            continue
        stack = [start]
        labels[start] = comp
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if labels[w] < 0:
                    labels[w] = comp
                    stack.append(w)
        comp += 1
    return labels


def is_regular(graph: LabelledGraph):
    """Short-distance power counting over every vertex subset of size >= 2:
    sum of alpha_minus over internal edges plus the subset size must exceed 1.
    Returns (ok, violating_subset_or_None).  Exhaustive, so capped at 20
    vertices; singletons are excluded since they contain no edge and always
    sit exactly at the boundary value 1.
    """
    n = graph.n_vertices
    if n > _MAX_SUBSET_VERTICES:
        raise ValueError(f"subset sweep capped at {_MAX_SUBSET_VERTICES} vertices, got {n}")
    masks = np.arange(1 << n, dtype=np.int64)
    size = np.zeros(1 << n, dtype=np.int64)
    for k in range(n):
        size += (masks >> k) & 1
    value = size.astype(float)
    for (u, v), am in zip(graph.edges, graph.alpha_minus):
        inside = ((masks >> u) & 1) & ((masks >> v) & 1)
        value += am * inside
    bad = (value <= 1.0) & (size >= 2)
    if not bad.any():
        return True, None
    worst = int(masks[bad][np.argmin(value[bad])])
    witness = tuple(k for k in range(n) if (worst >> k) & 1)
    return False, witness


def tight_partitions(graph: LabelledGraph):
    """Yield every vertex partition with a block meeting all connected
    components, excluding the trivial single-block partition (whose value is
    always exactly 1 and whose contribution is the overall volume factor)."""
    n = graph.n_vertices
    if n > _MAX_PARTITION_VERTICES:
        raise ValueError(f"partition sweep capped at {_MAX_PARTITION_VERTICES} vertices, got {n}")
    comp = component_labels(graph)
    n_comp = int(comp.max()) + 1
    for part in _set_partitions(tuple(range(n))):
        if len(part) <= 1:
            continue
        for block in part:
            if len({int(comp[v]) for v in block}) == n_comp:
                yield part
                break


def _partition_value(part, edges, weights) -> float:
    block_of = {}
    for b, block in enumerate(part):
        for v in block:
            block_of[v] = b
    total = float(len(part))
    for (u, v), w in zip(edges, weights):
        if block_of[u] != block_of[v]:
            total += w
    return total


def is_integrable(graph: LabelledGraph):
    """Large-scale power counting: for every tight partition, the sum of
    alpha_plus over cross-block edges plus the block count must stay below 1.
    Returns (ok, violating_partition_or_None)."""
    for part in tight_partitions(graph):
        if _partition_value(part, graph.edges, graph.alpha_plus) >= 1.0:
            return False, part
    return True, None


@dataclass(frozen=True)
class BoundReport:
    feasible: bool
    exponent: float  # components + total extra decay spent
    witness: tuple | None


def bound_exponent(graph: LabelledGraph, beta) -> BoundReport:
    """Check integrability with each alpha_plus lowered by beta >= 0; on
    success the integral over a box of side L is bounded by
    L^(components + sum(beta))."""
    beta = tuple(float(b) for b in beta)
    if len(beta) != len(graph.edges):
        raise ValueError("one beta per edge")
    if any(b < 0.0 for b in beta):
        raise ValueError("beta must be nonnegative")
    weights = tuple(a - b for a, b in zip(graph.alpha_plus, beta))
    m = int(component_labels(graph).max()) + 1
    exponent = m + sum(beta)
    for part in tight_partitions(graph):
        if _partition_value(part, graph.edges, weights) >= 1.0:
            return BoundReport(feasible=False, exponent=float(exponent), witness=part)
    return BoundReport(feasible=True, exponent=float(exponent), witness=None)


# ---------------------------------------------------------------------------
# cumulant graphs


@dataclass(frozen=True)
class CumulantGraph:
    """Graph encoding one (pairing, partition) term of a 2p-point moment:
    pairing edges carry the long-memory kernel exponents (2H-2, 2H-2), clique
    edges within partition blocks the exponential-decay labels (0, -2).
    Pairing edges come first in graph.edges."""

    graph: LabelledGraph
    pairing: tuple
    partition: tuple
    n_pairs: int
    hurst: float


def build_cumulant_graph(partition, pairing, hurst: float) -> CumulantGraph:
    hurst = float(hurst)
    if not 0.5 < hurst < 1.0:
        raise ValueError("cumulant graphs require a long-memory exponent (H > 1/2)")
    pairing = tuple(tuple(sorted((int(a), int(b)))) for a, b in pairing)
    p = len(pairing)
    flat = sorted(v for pair in pairing for v in pair)
    if flat != list(range(2 * p)):
        raise ValueError("pairing must cover 0..2p-1 by disjoint pairs")
    partition = tuple(tuple(sorted(int(v) for v in block)) for block in partition)
    covered = sorted(v for block in partition for v in block)
    if covered != list(range(2 * p)):
        raise ValueError("partition must cover 0..2p-1 by disjoint blocks")
    for block in partition:
        if len(block) < 2:
            raise ValueError(f"singleton block {block}: centered factors make it vanish")
    edges = list(pairing)
    long_range = 2.0 * hurst - 2.0
    alpha_minus = [long_range] * p
    alpha_plus = [long_range] * p
    for block in partition:
        for i, u in enumerate(block):
            for v in block[i + 1 :]:
                edges.append((u, v))
                alpha_minus.append(0.0)
                alpha_plus.append(-2.0)
    graph = labelled_graph(
        2 * p, edges, alpha_minus, alpha_plus, kernel_norms=[1.0] * len(edges)
    )
    return CumulantGraph(
        graph=graph, pairing=pairing, partition=partition, n_pairs=p, hurst=hurst
    )


def _block_index(cg: CumulantGraph) -> dict:
    out = {}
    for b, block in enumerate(cg.partition):
        for v in block:
            out[v] = b
    return out


@dataclass(frozen=True)
class ForestBound:
    forest: tuple  # pairing edges whose quotient images form the spanning forest
    beta: tuple  # per-edge extra decay, aligned with graph.edges
    n_components: int  # components of the quotient (equals those of the graph)
    exponent: float  # n_components + (1 - kappa) * |forest|
    worst_case: float  # p - kappa * (p - n_components), the pairing-count bound
    certificate: BoundReport


def spanning_forest_beta(cg: CumulantGraph, kappa: float) -> ForestBound:
    """Spend extra decay 1 - kappa on a set of pairing edges that projects to
    a maximal spanning forest of the block quotient; certify the resulting
    bound exponent."""
    kappa = float(kappa)
    if not 0.0 < kappa < 2.0 - 2.0 * cg.hurst:
        raise ValueError("kappa must lie in (0, 2 - 2H)")
    block_of = _block_index(cg)
    n_blocks = len(cg.partition)
    parent = list(range(n_blocks))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    forest = []
    for u, v in cg.pairing:
        ru, rv = find(block_of[u]), find(block_of[v])
        if ru != rv:
            parent[ru] = rv
            forest.append((u, v))
    m = len({find(b) for b in range(n_blocks)})
    p = cg.n_pairs
    if len(forest) != n_blocks - m:
        raise AssertionError("forest size must equal blocks minus components")
    if len(forest) > p - m:
        raise AssertionError("forest cannot exceed pairs minus components")
    in_forest = set(forest)
    beta = tuple(
        1.0 - kappa if k < p and cg.pairing[k] in in_forest else 0.0
        for k in range(len(cg.graph.edges))
    )
    report = bound_exponent(cg.graph, beta)
    exponent = m + (1.0 - kappa) * len(forest)
    return ForestBound(
        forest=tuple(forest),
        beta=beta,
        n_components=int(m),
        exponent=float(exponent),
        worst_case=float(p - kappa * (p - m)),
        certificate=report,
    )


# ---------------------------------------------------------------------------
# enumeration


def iter_pairings(n: int):
    """All perfect pairings of range(n), n even, as tuples of sorted pairs."""
    items = tuple(range(n))

    def rec(remaining):
        if not remaining:
            yield ()
            return
        first = remaining[0]
        for k in range(1, len(remaining)):
            partner = remaining[k]
            rest = remaining[1:k] + remaining[k + 1 :]
            for tail in rec(rest):
                yield ((first, partner),) + tail

    if n % 2:
        raise ValueError("pairings need an even number of elements")
    return rec(items)


def iter_singleton_free_partitions(n: int):
    for part in _set_partitions(tuple(range(n))):
        if all(len(block) >= 2 for block in part):
            yield part


def enumerate_pairings_partitions(p: int):
    """All (partition without singletons, pairing) choices on 2p elements."""
    if p > _MAX_PAIRS:
        raise ValueError(f"pair count capped at {_MAX_PAIRS}, got {p}")
    if p < 1:
        raise ValueError("need at least one pair")
    partitions = tuple(iter_singleton_free_partitions(2 * p))
    for pairing in iter_pairings(2 * p):
        for part in partitions:
            yield part, pairing


# ---------------------------------------------------------------------------
# quadrature of pair-kernel moment integrals


def joint_moment_batch(model: ChainModel, fs, times) -> np.ndarray:
    """Stationary moments E prod_j f_j(Y_{t_j}) for many time tuples at once.

    times: (n_points, k); fs: (k, n_states).  Episodes are sorted per row and
    folded right-to-left through the spectral form of the semigroup.
    """
    times = np.asarray(times, dtype=float)
    fs = np.asarray(fs, dtype=float)
    if times.ndim != 2 or fs.ndim != 2 or times.shape[1] != fs.shape[0]:
        raise ValueError("times must be (n_points, k) and fs (k, n_states)")
    k = times.shape[1]
    if model.n_states == 1:
        return np.full(times.shape[0], float(np.prod(fs[:, 0])))
    order = np.argsort(times, axis=1, kind="stable")
    st = np.take_along_axis(times, order, axis=1)
    evals, vecs, _ = _spectral_data(model)
    vinv = np.linalg.inv(vecs)
    g = fs[order[:, k - 1]].astype(complex)
    for j in range(k - 2, -1, -1):
        gaps = st[:, j + 1] - st[:, j]
        g = (g @ vinv.T) * np.exp(np.outer(gaps, -evals))
        g = (g @ vecs.T) * fs[order[:, j]]
    vals = g @ model.mu
    scale = max(1.0, np.abs(vals).max())
    if np.abs(vals.imag).max() > 1e-9 * scale:
        raise FloatingPointError("moment fold produced a non-real result")
    return vals.real


def joint_cumulant_batch(model: ChainModel, fs, times) -> np.ndarray:
    """Joint cumulants at many time tuples, by the partition expansion over
    batched moments."""
    times = np.asarray(times, dtype=float)
    fs = np.asarray(fs, dtype=float)
    k = fs.shape[0]
    cache = {}

    def moment(subset):
        if subset not in cache:
            cache[subset] = joint_moment_batch(model, fs[list(subset)], times[:, list(subset)])
        return cache[subset]

    total = np.zeros(times.shape[0])
    for part in _partitions_cached(k):
        prod = np.full(times.shape[0], mobius_coefficient(len(part)))
        for block in part:
            prod = prod * moment(block)
        total += prod
    return total


def _gauss_legendre(a: float, b: float, n: int):
    x, w = roots_legendre(n)
    return 0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * w


def _jacobi_unit(power: float, n: int):
    # nodes/weights for int_0^1 u^power f(u) du with power in (-1, 0]
    x, w = roots_jacobi(n, 0.0, power)
    return 0.5 * (x + 1.0), w / 2.0 ** (power + 1.0)


def _doubling_breaks(start: float, first_step: float, length: float):
    """Breakpoints start = b_0 < ... < b_k = length with doubling steps."""
    breaks = [start]
    pos, step = start, max(first_step, length * 1e-14)
    while pos + step < length:
        pos += step
        breaks.append(pos)
        step *= 2.0
    breaks.append(length)
    return breaks


def _decay_scale(model: ChainModel) -> float:
    # panel widths must resolve the fastest-decaying semigroup mode
    if model.n_states == 1:
        return math.inf
    evals, _, zero = _spectral_data(model)
    rates = evals.real[~zero]
    top = float(rates.max()) if rates.size else 0.0
    return 2.0 / top if top > 0.0 else math.inf


def _inner_rule(t0: float, lo: float, hi: float, hurst: float, corr: float, n: int):
    """Nodes/weights in t1 over [lo, hi] against the kernel |t1 - t0|^{2H-2}:
    a Gauss-Jacobi head on segments touching the singularity, then Legendre
    panels doubling away from it, the first no wider than the decay scale.
    Weights include the kernel factor."""
    power = 2.0 * hurst - 2.0
    ref = max(1.0, abs(t0), abs(lo), abs(hi))
    c = min(max(t0, lo), hi)
    nodes, weights = [], []

    def add_side(length: float, sign: float, gap: float):
        # t1 = c + sign * s for s in (0, length], distance |t1 - t0| = gap + s
        if length <= 0.0:
            return
        gap = max(gap, 0.0)
        head = min(corr, length)
        if gap <= 1e-13 * ref:
            u, w = _jacobi_unit(power, n)
            nodes.append(c + sign * head * u)
            weights.append(w * head ** (power + 1.0))
            if head >= length:
                return
            breaks = _doubling_breaks(head, head, length)
        else:
            breaks = _doubling_breaks(0.0, min(gap, head), length)
        for a, b in zip(breaks[:-1], breaks[1:]):
            x, w = _gauss_legendre(a, b, n)
            nodes.append(c + sign * x)
            weights.append(w * (gap + x) ** power)

    add_side(c - lo, -1.0, t0 - c)
    add_side(hi - c, +1.0, c - t0)
    if not nodes:
        return np.empty(0), np.empty(0)
    return np.concatenate(nodes), np.concatenate(weights)


def _outer_rule(lo: float, hi: float, kinks, corr: float, n: int, depth: int):
    """Legendre panels over [lo, hi], dyadically refined toward each kink
    (the inner integral has a |t - kink|^{2H-1} branch at the partner
    interval's endpoints) and capped at the decay scale everywhere.  The
    smallest panels have width corr * 2^-depth, which bounds the kink error
    by that width to the power 2H."""
    span = hi - lo
    ref = max(1.0, abs(lo), abs(hi))
    cap = min(corr, span)
    cuts = {lo, hi}
    for e in kinks:
        if e < lo - 1e-13 * ref or e > hi + 1e-13 * ref:
            continue
        e = min(max(e, lo), hi)
        if lo < e < hi:
            cuts.add(e)
        step = cap * 2.0 ** (-depth)
        while step <= span:
            for cand in (e - step, e + step):
                if lo < cand < hi:
                    cuts.add(cand)
            step *= 2.0
    cuts = sorted(cuts)
    nodes, weights = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a <= 1e-14 * ref:
            continue
        pieces = max(1, int(math.ceil((b - a) / cap - 1e-9)))
        edges = np.linspace(a, b, pieces + 1)
        for aa, bb in zip(edges[:-1], edges[1:]):
            x, w = _gauss_legendre(aa, bb, n)
            nodes.append(x)
            weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def _pair_rule(model: ChainModel, iv_even, iv_odd, hurst: float, n_outer: int, n_inner: int, depth: int):
    """Flat (t_even, t_odd, weight) arrays for one kernel-weighted pair of
    interval integrals; the kernel |t_odd - t_even|^{2H-2} is inside the
    weights."""
    lo0, hi0 = float(iv_even[0]), float(iv_even[1])
    lo1, hi1 = float(iv_odd[0]), float(iv_odd[1])
    if hi0 <= lo0 or hi1 <= lo1:
        raise ValueError("intervals must have positive length")
    corr = _decay_scale(model)
    t0s, w0s = _outer_rule(lo0, hi0, (lo1, hi1), min(corr, hi0 - lo0), n_outer, depth)
    corr_in = min(corr, hi1 - lo1)
    te, to, wt = [], [], []
    for t, w in zip(t0s, w0s):
        s, ws = _inner_rule(t, lo1, hi1, hurst, corr_in, n_inner)
        te.append(np.full(len(s), t))
        to.append(s)
        wt.append(w * ws)
    return np.concatenate(te), np.concatenate(to), np.concatenate(wt)


_MAX_QUAD_NODES = 4_000_000
_FOLD_CHUNK = 200_000


def _resolve_rule_params(p: int, n_outer, n_inner, depth):
    # one pair affords a fine rule; the tensor square for p = 2 cannot
    if n_outer is None:
        n_outer = 10 if p == 1 else 4
    if n_inner is None:
        n_inner = 10 if p == 1 else 4
    if depth is None:
        depth = 24 if p == 1 else 4
    return int(n_outer), int(n_inner), int(depth)


def _tensor_nodes(model: ChainModel, intervals, hurst: float, n_outer: int, n_inner: int, depth: int):
    p = len(intervals) // 2
    rules = [
        _pair_rule(model, intervals[2 * k], intervals[2 * k + 1], hurst, n_outer, n_inner, depth)
        for k in range(p)
    ]
    sizes = [len(r[2]) for r in rules]
    total = int(np.prod(sizes))
    if total > _MAX_QUAD_NODES:
        raise ValueError(
            f"quadrature grid has {total} nodes; lower n_outer, n_inner or depth"
        )
    grid = np.meshgrid(*[np.arange(sz) for sz in sizes], indexing="ij")
    idx = [g.reshape(-1) for g in grid]
    times = np.empty((total, 2 * p))
    weight = np.ones(total)
    for k, (te, to, wt) in enumerate(rules):
        times[:, 2 * k] = te[idx[k]]
        times[:, 2 * k + 1] = to[idx[k]]
        weight *= wt[idx[k]]
    return times, weight


def _check_i2p_args(observables, intervals, hurst: float) -> np.ndarray:
    fs = np.atleast_2d(np.asarray(observables, dtype=float))
    if len(intervals) != fs.shape[0] or fs.shape[0] % 2:
        raise ValueError("need one interval per observable, an even number of them")
    if fs.shape[0] > 2 * _MAX_PAIRS:
        raise ValueError("too many observables")
    if not 0.5 < hurst < 1.0:
        raise ValueError("pair kernel is integrable only for H in (1/2, 1)")
    return fs


def i2p_quadrature(model: ChainModel, observables, intervals, hurst: float, n_outer=None, n_inner=None, depth=None) -> float:
    """Tensor quadrature of the 2p-point moment integral with one long-memory
    kernel per consecutive index pair."""
    fs = _check_i2p_args(observables, intervals, hurst)
    params = _resolve_rule_params(fs.shape[0] // 2, n_outer, n_inner, depth)
    times, weight = _tensor_nodes(model, intervals, hurst, *params)
    total = 0.0
    for start in range(0, times.shape[0], _FOLD_CHUNK):
        sl = slice(start, start + _FOLD_CHUNK)
        total += float(weight[sl] @ joint_moment_batch(model, fs, times[sl]))
    return total


def i2p_partition_sum(model: ChainModel, observables, intervals, hurst: float, n_outer=None, n_inner=None, depth=None) -> float:
    """Same integral, with the integrand expanded into a sum over
    singleton-free partitions of products of block cumulants.  Agrees with
    i2p_quadrature node-by-node (the expansions are identical pointwise for
    centered observables), so this ties the two routes together exactly."""
    fs = _check_i2p_args(observables, intervals, hurst)
    params = _resolve_rule_params(fs.shape[0] // 2, n_outer, n_inner, depth)
    times, weight = _tensor_nodes(model, intervals, hurst, *params)
    total = 0.0
    for part in iter_singleton_free_partitions(fs.shape[0]):
        for start in range(0, times.shape[0], _FOLD_CHUNK):
            sl = slice(start, start + _FOLD_CHUNK)
            prod = weight[sl].copy()
            for block in part:
                prod = prod * joint_cumulant_batch(
                    model, fs[list(block)], times[sl][:, list(block)]
                )
            total += float(prod.sum())
    return total


@dataclass(frozen=True)
class MainTermReport:
    value: float  # quadrature of the 2p-point kernel integral
    main_term: float  # product of overlap lengths times stationary pair covariances
    remainder: float
    overlaps: tuple
    pair_covariances: tuple
    empirical_constant: float | None  # measured kernel-integral prefactor (p = 1)
    gamma_positive: float  # Gamma(2H - 1), the prefactor the quadrature realizes
    gamma_reflected: float  # Gamma(1 - 2H), the reflection-side candidate


def main_term_check(model: ChainModel, observables, intervals, hurst: float, n_outer=None, n_inner=None, depth=None) -> MainTermReport:
    """Compare the pair-kernel moment integral against its leading term: per
    pair, overlap length times the stationary raw-kernel covariance.

    Restricted to p <= 2 (quadrature dimension) and centered observables.
    For p = 1 with overlapping intervals the measured prefactor in front of
    the spectral inner product is reported so the two Gamma-constant
    candidates can be told apart.
    """
    fs = np.atleast_2d(np.asarray(observables, dtype=float))
    p = fs.shape[0] // 2
    if fs.shape[0] % 2 or p < 1 or p > 2:
        raise ValueError("need 2 or 4 observables")
    if not 0.5 < hurst < 1.0:
        raise ValueError("main-term comparison requires H > 1/2")
    for f in fs:
        if abs(model.mean(f)) > 1e-10 * (1.0 + sup_norm(f)):
            raise ValueError("observables must be centered")
    value = i2p_quadrature(model, fs, intervals, hurst, n_outer, n_inner, depth)
    overlaps = []
    covs = []
    for k in range(p):
        lo = max(intervals[2 * k][0], intervals[2 * k + 1][0])
        hi = min(intervals[2 * k][1], intervals[2 * k + 1][1])
        overlaps.append(max(0.0, float(hi - lo)))
        covs.append(raw_kernel_covariance(model, hurst, fs[2 * k], fs[2 * k + 1]))
    main = float(np.prod([o * c for o, c in zip(overlaps, covs)]))
    empirical = None
    if p == 1 and overlaps[0] > 0.0:
        half = fractional_power(model, 1.0 - 2.0 * hurst, fs[1])
        other = fractional_power(model, 1.0 - 2.0 * hurst, fs[0])
        spectral = model.inner(fs[0], half) + model.inner(fs[1], other)
        if abs(spectral) > 0.0:
            empirical = value / overlaps[0] / spectral
    return MainTermReport(
        value=value,
        main_term=main,
        remainder=value - main,
        overlaps=tuple(overlaps),
        pair_covariances=tuple(covs),
        empirical_constant=empirical,
        gamma_positive=float(gamma_fn(2.0 * hurst - 1.0)),
        gamma_reflected=float(gamma_fn(1.0 - 2.0 * hurst)),
    )


# ---------------------------------------------------------------------------
# graph description files


def parse_graph_text(text: str) -> LabelledGraph:
    """Parse a plain description: first data line holds the vertex count,
    each following line one edge as `u v alpha_minus alpha_plus`.  Blank
    lines and lines starting with # are skipped."""
    lines = [
        ln.strip()
        for ln in text.splitlines()
        if ln.strip() and not ln.strip().startswith("#")
    ]
    if not lines:
        raise ValueError("empty graph description")
    n = int(lines[0])
    edges = []
    am = []
    ap = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 4:
            raise ValueError(f"bad edge line: {ln!r} (want: u v alpha_minus alpha_plus)")
        edges.append((int(parts[0]), int(parts[1])))
        am.append(float(parts[2]))
        ap.append(float(parts[3]))
    return labelled_graph(n, edges, am, ap)
