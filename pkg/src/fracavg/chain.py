"""Finite-state continuous-time Markov chain: exact sampling, semigroup,
fractional generator powers, and joint cumulants of observables.

Observables are plain length-n arrays of per-state values (vector-valued
observables are stacked arrays of these).  On a finite state space the sup
norm plays the role of the function-space norm: with the discrete metric
every function is Lipschitz with constant at most twice its sup.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.linalg import expm
from scipy.special import gamma as gamma_fn

from .fbm import _rng_for

# Stream purpose id for chain jumps; 0..2 are taken by the Gaussian driver.
_CHAIN_PURPOSE = 3

_ROWSUM_TOL = 1e-12
_MU_TOL = 1e-10
_GAP_MIN = 1e-10
_EIGVEC_COND_MAX = 1e8
_QUAD_OPTS = dict(epsabs=1e-11, epsrel=1e-11, limit=400)


def sup_norm(f) -> float:
    return float(np.max(np.abs(np.asarray(f, dtype=float))))


@dataclass(frozen=True)
class ChainModel:
    """Irreducible chain with generator `generator` (rows sum to zero), its
    stationary law `mu`, and spectral gap `gap` (the smallest nonzero real
    part among eigenvalues of minus the generator)."""

    generator: np.ndarray
    mu: np.ndarray
    gap: float

    @property
    def n_states(self) -> int:
        return self.generator.shape[0]

    def mean(self, f) -> float:
        """Stationary mean of an observable."""
        return float(self.mu @ np.asarray(f, dtype=float))

    def center(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        return f - self.mean(f)

    def inner(self, f, g) -> float:
        """Stationary inner product sum_y mu_y f_y g_y."""
        f = np.asarray(f, dtype=float)
        g = np.asarray(g, dtype=float)
        return float(self.mu @ (f * g))


def _reachable(adj: np.ndarray, start: int) -> set:
    seen = {start}
    stack = [start]
    while stack:
        s = stack.pop()
        for t in np.nonzero(adj[s])[0]:
            if t not in seen:
                seen.add(int(t))
                stack.append(int(t))
    return seen


def _check_irreducible(q: np.ndarray):
    n = q.shape[0]
    adj = q > 0.0
    np.fill_diagonal(adj, False)
    fwd = _reachable(adj, 0)
    if len(fwd) < n:
        missing = sorted(set(range(n)) - fwd)
        raise ValueError(f"chain is reducible: states {missing} unreachable from state 0")
    bwd = _reachable(adj.T, 0)
    if len(bwd) < n:
        missing = sorted(set(range(n)) - bwd)
        raise ValueError(f"chain is reducible: states {missing} cannot reach state 0")


def stationary_measure(q: np.ndarray) -> np.ndarray:
    """Unique probability vector mu with mu @ q = 0, by null-space extraction.

    Raises for reducible chains, naming the offending class of states.
    """
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    if n == 1:
        return np.array([1.0])
    _check_irreducible(q)
    # left null vector: smallest singular vector of q^T
    _, svals, vt = np.linalg.svd(q.T)
    if n > 1 and svals[-2] < 1e-12 * max(svals[0], 1.0):
        raise ValueError("generator null space is not one-dimensional")
    mu = vt[-1]
    mu = mu / mu.sum()
    if mu.min() <= 0.0:
        raise ValueError("stationary measure has a non-positive entry")
    if sup_norm(mu @ q) > _MU_TOL:
        raise ValueError("stationary measure residual above tolerance")
    return mu


def chain_model(q) -> ChainModel:
    """Validate a generator matrix and package it with mu and the gap."""
    q = np.array(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError("generator must be square")
    n = q.shape[0]
    off = q - np.diag(np.diag(q))
    if off.min() < 0.0:
        raise ValueError("off-diagonal generator entries must be >= 0")
    if sup_norm(q.sum(axis=1)) > _ROWSUM_TOL * max(1.0, sup_norm(q)):
        raise ValueError("generator rows must sum to zero")
    mu = stationary_measure(q)
    if n == 1:
        return ChainModel(generator=q, mu=mu, gap=math.inf)
    evals = np.linalg.eigvals(-q)
    nonzero = evals[np.abs(evals) > 1e-8 * max(1.0, sup_norm(q))]
    gap = float(nonzero.real.min())
    if gap <= _GAP_MIN:
        raise ValueError(f"spectral gap {gap:.3e} below tolerance")
    return ChainModel(generator=q, mu=mu, gap=gap)


def two_state_chain(rate01: float, rate10: float) -> ChainModel:
    """Two states with jump rates rate01 (0 -> 1) and rate10 (1 -> 0);
    mu = (rate10, rate01)/(rate01 + rate10), gap = rate01 + rate10."""
    return chain_model([[-rate01, rate01], [rate10, -rate10]])


def semigroup_apply(model: ChainModel, t: float, f) -> np.ndarray:
    """P_t f = exp(t * generator) f by scaling-and-squaring."""
    if t < 0.0:
        raise ValueError("semigroup time must be >= 0")
    f = np.asarray(f, dtype=float)
    if t == 0.0:
        return f.copy()
    return expm(model.generator * t) @ f


def _spectral_data(model: ChainModel):
    """Eigendecomposition of L = -generator with the zero mode flagged.
    Rejects near-defective generators by eigenvector condition number."""
    lmat = -model.generator
    evals, vecs = np.linalg.eig(lmat)
    cond = np.linalg.cond(vecs)
    if cond > _EIGVEC_COND_MAX:
        raise ValueError(
            f"generator too close to defective: eigenvector condition {cond:.3e}"
        )
    zero = np.abs(evals) < 1e-8 * max(1.0, sup_norm(model.generator))
    if zero.sum() != 1 and model.n_states > 1:
        raise ValueError("expected exactly one zero eigenvalue")
    return evals, vecs, zero


def fractional_power(model: ChainModel, alpha: float, f) -> np.ndarray:
    """(-generator)^alpha f on the mean-zero subspace, by eigendecomposition.

    Principal-branch powers of the (possibly complex) nonzero eigenvalues; the
    zero mode is annihilated for alpha > 0 and requires a mean-zero input for
    alpha < 0.  alpha = 0 is the projection onto mean-zero functions.
    """
    f = np.asarray(f, dtype=float)
    if not -1.0 < alpha < 1.0:
        raise ValueError("fractional power exponent must lie in (-1, 1)")
    if alpha == 0.0:
        return model.center(f)
    if alpha < 0.0 and abs(model.mean(f)) > _MU_TOL * (1.0 + sup_norm(f)):
        raise ValueError("negative powers need a mean-zero observable")
    if model.n_states == 1:
        return np.zeros(1)
    evals, vecs, zero = _spectral_data(model)
    coef = np.linalg.solve(vecs, f.astype(complex))
    powers = np.where(zero, 0.0, np.where(zero, 1.0, evals) ** alpha)
    out = vecs @ (powers * coef)
    scale = max(1.0, np.abs(out).max())
    if np.abs(out.imag).max() > 1e-9 * scale:
        raise FloatingPointError("fractional power produced a non-real result")
    return out.real


def fractional_power_quadrature(model: ChainModel, alpha: float, f) -> np.ndarray:
    """Independent route to the fractional power, by quadrature in time.

    alpha in (0,1):   (1/Gamma(-alpha)) int_0^inf t^{-alpha-1} (P_t f - f) dt
    alpha in (-1,0):  (1/Gamma(-alpha)) int_0^inf t^{-alpha-1} P_t f dt
    truncated at T* = 40/gap with the constant part of the tail integrated
    in closed form (the remainder is O(e^{-40})).
    """
    f = np.asarray(f, dtype=float)
    if not -1.0 < alpha < 1.0 or alpha == 0.0:
        raise ValueError("quadrature route needs alpha in (-1, 1) \\ {0}")
    if alpha < 0.0 and abs(model.mean(f)) > _MU_TOL * (1.0 + sup_norm(f)):
        raise ValueError("negative powers need a mean-zero observable")
    if model.n_states == 1:
        return np.zeros(1)
    q = model.generator
    t_star = 40.0 / model.gap
    fbar = model.mean(f)
    prefactor = 1.0 / gamma_fn(-alpha)
    # negative powers act on the mean-zero part only; integrating the exactly
    # centered observable keeps the tail exponentially small
    f_eff = model.center(f) if alpha < 0.0 else f
    t_split = min(1.0 / model.gap, t_star)
    out = np.zeros_like(f, dtype=float)
    for i in range(model.n_states):
        if alpha > 0.0:
            # smooth part (P_t f - f)/t against the endpoint weight t^{-alpha};
            # the weighted form only covers the singular stretch near 0
            def near(t, i=i):
                if t <= 0.0:
                    return (q @ f)[i]
                return ((expm(q * t) @ f)[i] - f[i]) / t

            def far(t, i=i):
                return ((expm(q * t) @ f)[i] - f[i]) * t ** (-alpha - 1.0)

            val, _ = quad(near, 0.0, t_split, weight="alg", wvar=(-alpha, 0.0), **_QUAD_OPTS)
            if t_star > t_split:
                val2, _ = quad(far, t_split, t_star, **_QUAD_OPTS)
                val += val2
            # beyond T* the semigroup has converged to the mean: P_t f - f ~ fbar - f
            tail = (fbar - f[i]) * t_star ** (-alpha) / alpha
            out[i] = prefactor * (val + tail)
        else:
            def integrand(t, i=i):
                return (expm(q * t) @ f_eff)[i]

            val, _ = quad(integrand, 0.0, t_split, weight="alg", wvar=(-alpha - 1.0, 0.0), **_QUAD_OPTS)
            if t_star > t_split:
                val2, _ = quad(
                    lambda t, i=i: (expm(q * t) @ f_eff)[i] * t ** (-alpha - 1.0),
                    t_split,
                    t_star,
                    **_QUAD_OPTS,
                )
                val += val2
            out[i] = prefactor * val
    return out


# ---------------------------------------------------------------------------
# Trajectories


@dataclass
class ChainPath:
    """Piecewise-constant right-continuous path: states[k] holds on
    [jump_times[k], jump_times[k+1])."""

    jump_times: np.ndarray
    states: np.ndarray
    horizon: float

    def state_at(self, times) -> np.ndarray:
        """Vectorized lookup of the state at each query time in [0, horizon]."""
        idx = np.searchsorted(self.jump_times, np.asarray(times, dtype=float), side="right") - 1
        return self.states[np.clip(idx, 0, len(self.states) - 1)]

    def n_jumps(self) -> int:
        return len(self.jump_times) - 1


def sample_trajectory(model: ChainModel, horizon: float, seed: int, path_index: int = 0) -> ChainPath:
    """Exact chain simulation started from the stationary law.

    Exponential holding times with the diagonal rates; next state drawn
    proportionally to the off-diagonal row.  Deterministic given
    (seed, path_index).
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    rng = _rng_for(seed, path_index, 0, purpose=_CHAIN_PURPOSE)
    n = model.n_states
    q = model.generator
    state = int(rng.choice(n, p=model.mu))
    times = [0.0]
    states = [state]
    t = 0.0
    while True:
        rate = -q[state, state]
        if rate <= 0.0:
            break
        t += rng.exponential(1.0 / rate)
        if t > horizon:
            break
        probs = q[state].copy()
        probs[state] = 0.0
        probs /= rate
        state = int(rng.choice(n, p=probs))
        times.append(t)
        states.append(state)
    return ChainPath(
        jump_times=np.asarray(times),
        states=np.asarray(states, dtype=np.int64),
        horizon=float(horizon),
    )


# ---------------------------------------------------------------------------
# Joint cumulants

_MAX_CUMULANT_ORDER = 10


def _set_partitions(items: tuple):
    """All partitions of an ordered tuple, as tuples of tuples."""
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield ((first,),) + part
        for i, block in enumerate(part):
            yield part[:i] + ((first,) + block,) + part[i + 1 :]


@lru_cache(maxsize=None)
def _partitions_cached(k: int):
    return tuple(_set_partitions(tuple(range(k))))


def mobius_coefficient(n_blocks: int) -> float:
    """Coefficient of a partition with the given number of blocks in the
    moments-to-cumulants expansion: (|blocks|-1)! * (-1)^(|blocks|-1)."""
    return float(math.factorial(n_blocks - 1) * (-1) ** (n_blocks - 1))


def _ordered_moment(model: ChainModel, fs, times, subset) -> float:
    """E prod_{i in subset} f_i(Y_{s_i}) via nested semigroup products,
    folding right-to-left through the time gaps."""
    g = np.asarray(fs[subset[-1]], dtype=float).copy()
    for j in range(len(subset) - 2, -1, -1):
        dt = times[subset[j + 1]] - times[subset[j]]
        g = np.asarray(fs[subset[j]], dtype=float) * semigroup_apply(model, dt, g)
    return model.mean(g)


def joint_moment(model: ChainModel, fs, times) -> float:
    """Exact stationary moment E prod_i f_i(Y_{s_i}) for sorted times."""
    times = [float(t) for t in times]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("times must be sorted ascending")
    return _ordered_moment(model, fs, times, tuple(range(len(fs))))


def joint_cumulant(model: ChainModel, fs, times) -> float:
    """Exact joint cumulant of f_1(Y_{s_1}), ..., f_k(Y_{s_k}).

    Moments over every subset are computed by semigroup products and combined
    over set partitions with the Moebius coefficients.
    """
    k = len(fs)
    if k < 1:
        raise ValueError("need at least one observable")
    if k != len(times):
        raise ValueError("one time per observable")
    if k > _MAX_CUMULANT_ORDER:
        raise ValueError(f"cumulant order {k} above guard {_MAX_CUMULANT_ORDER}")
    times = [float(t) for t in times]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("times must be sorted ascending")
    moments = {}

    def moment(subset):
        if subset not in moments:
            moments[subset] = _ordered_moment(model, fs, times, subset)
        return moments[subset]

    total = 0.0
    for part in _partitions_cached(k):
        prod = mobius_coefficient(len(part))
        for block in part:
            prod *= moment(block)
        total += prod
    return total


def moment_from_cumulants(model: ChainModel, fs, times) -> float:
    """Reconstruct the full moment as a sum over partitions of products of
    joint cumulants of the blocks (the inverse expansion); consistency oracle
    for joint_cumulant."""
    k = len(fs)
    total = 0.0
    for part in _partitions_cached(k):
        prod = 1.0
        for block in part:
            prod *= joint_cumulant(model, [fs[i] for i in block], [times[i] for i in block])
        total += prod
    return total
