"""First- and second-order driver increments over one mollified path.

Both levels are left-point sums on the common sampling grid; the second-order
sum keeps half of its diagonal so that the shuffle identity

    second[a, b] + second[b, a]^T == first[a] (x) first[b]

and Chen's relation over chained intervals hold to rounding, not just in the
small-step limit.  Mixed schemes (e.g. trapezoid at one level only) break
these algebraic identities, which the checks below rely on.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .chain import ChainPath
from .fbm import (
    FbmPath,
    Mollifier,
    _rng_for,
    fgn_autocovariance,
    mean_iterated_deterministic,
    mollified_derivative,
    sample_fgn_unit,
)

__all__ = [
    "RoughDriver",
    "RoughIncrement",
    "rough_driver",
    "deterministic_rough_driver",
    "rough_increment",
    "first_order",
    "second_order",
    "chen_residual",
    "geometric_residual",
    "mean_iterated_deterministic",
    "increment_covariance",
    "chaos_variances_exact",
    "chaos_domination_check",
    "ChaosCheck",
    "power_fit",
]

_CHAOS_PURPOSE = 5


@dataclass(frozen=True)
class RoughDriver:
    """Precomputed integrand-weighted driver increments on one path.

    weights[a, k] = f_a(r_k) * dB_delta(r_k) * dt, so every rough increment
    over a grid-aligned [s, t] is a windowed sum.  prefix holds the running
    sums (prefix[a, l] = sum of weights[a, :l]).
    """

    grid_dt: float
    n_steps: int
    hurst: float
    epsilon: float
    delta: float
    weights: np.ndarray  # (n_obs, n_steps, m)
    prefix: np.ndarray  # (n_obs, n_steps + 1, m)
    key: tuple


@dataclass(frozen=True)
class RoughIncrement:
    """Levels of one rough increment: first (n_obs, m), second
    (n_obs, n_obs, m, m), for every ordered observable pair."""

    s: float
    t: float
    first: np.ndarray
    second: np.ndarray
    delta: float
    key: tuple


def _pack_driver(fvals: np.ndarray, fbm_path: FbmPath, epsilon: float, delta: float) -> RoughDriver:
    grid = fbm_path.grid
    moll = Mollifier(float(delta), grid.dt)
    db = mollified_derivative(fbm_path, moll)  # (n_steps + 1, m)
    weights = fvals[:, :, None] * db[None, :-1, :] * grid.dt
    prefix = np.concatenate(
        [np.zeros((fvals.shape[0], 1, weights.shape[2])), np.cumsum(weights, axis=1)], axis=1
    )
    key = (
        fbm_path.seed,
        fbm_path.path_index,
        float(fbm_path.hurst),
        float(grid.dt),
        int(grid.n_steps),
        float(epsilon),
        float(delta),
        hash(fvals.tobytes()),
    )
    return RoughDriver(
        grid_dt=grid.dt,
        n_steps=grid.n_steps,
        hurst=float(fbm_path.hurst),
        epsilon=float(epsilon),
        delta=float(delta),
        weights=weights,
        prefix=prefix,
        key=key,
    )


def rough_driver(observables, chain_path: ChainPath, fbm_path: FbmPath, epsilon: float, delta: float) -> RoughDriver:
    """Driver weighted by chain observables sampled at the sped-up times.

    observables: per-state value vector, or a stack of them (n_obs, n_states).
    """
    obs = np.atleast_2d(np.asarray(observables, dtype=float))
    if obs.ndim != 2:
        raise ValueError("observables must be a vector or a stack of per-state vectors")
    grid = fbm_path.grid
    if chain_path.horizon * float(epsilon) < grid.horizon * (1.0 - 1e-12):
        raise ValueError("fast-chain path is shorter than horizon/epsilon")
    left_times = grid.times()[:-1]
    states = chain_path.state_at(left_times / float(epsilon))
    if obs.shape[1] <= int(states.max(initial=0)):
        raise ValueError("observable vector shorter than the chain state space")
    return _pack_driver(obs[:, states], fbm_path, epsilon, delta)


def deterministic_rough_driver(funcs, fbm_path: FbmPath, delta: float) -> RoughDriver:
    """Driver weighted by deterministic functions of time (vectorized
    callables).  No chain and no scale separation: epsilon is fixed at 1."""
    left_times = fbm_path.grid.times()[:-1]
    fvals = np.stack([np.asarray(f(left_times), dtype=float) for f in funcs])
    return _pack_driver(fvals, fbm_path, 1.0, delta)


def _grid_index(driver: RoughDriver, time: float) -> int:
    ratio = time / driver.grid_dt
    k = int(round(ratio))
    if abs(ratio - k) > 1e-9 * max(1.0, abs(ratio)):
        raise ValueError(f"time {time} is not on the sampling grid (dt = {driver.grid_dt})")
    if k < 0 or k > driver.n_steps:
        raise ValueError(f"time {time} is outside the sampled horizon")
    return k


def rough_increment(driver: RoughDriver, s: float, t: float) -> RoughIncrement:
    i = _grid_index(driver, s)
    j = _grid_index(driver, t)
    if i > j:
        raise ValueError("reversed interval")
    scale1 = driver.epsilon ** (0.5 - driver.hurst)
    scale2 = driver.epsilon ** (1.0 - 2.0 * driver.hurst)
    w = driver.weights[:, i:j, :]
    # run[a, l] = sum of weights[a, i:i+l]: left factor of the strict sum
    run = driver.prefix[:, i:j, :] - driver.prefix[:, i, None, :]
    first = scale1 * (driver.prefix[:, j, :] - driver.prefix[:, i, :])
    cross = np.einsum("alm,bln->abmn", run, w)
    diag = 0.5 * np.einsum("alm,bln->abmn", w, w)
    second = scale2 * (cross + diag)
    return RoughIncrement(
        s=i * driver.grid_dt,
        t=j * driver.grid_dt,
        first=first,
        second=second,
        delta=driver.delta,
        key=driver.key,
    )


def first_order(f, chain_path, fbm_path, epsilon, delta, s, t) -> np.ndarray:
    """One observable, one interval.  For many intervals on a shared path
    build the driver once instead."""
    drv = rough_driver(np.atleast_2d(f), chain_path, fbm_path, epsilon, delta)
    return rough_increment(drv, s, t).first[0]


def second_order(f, g, chain_path, fbm_path, epsilon, delta, s, t) -> np.ndarray:
    drv = rough_driver(
        np.stack([np.asarray(f, dtype=float), np.asarray(g, dtype=float)]),
        chain_path,
        fbm_path,
        epsilon,
        delta,
    )
    return rough_increment(drv, s, t).second[0, 1]


def _same_time(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))


def chen_residual(whole: RoughIncrement, left: RoughIncrement, right: RoughIncrement) -> float:
    """Max-abs residual of the multiplicative (Chen) identity over s < u < t.

    Zero up to rounding when all three come from one driver and chain at u.
    """
    if not (whole.key == left.key == right.key):
        raise ValueError("increments come from different paths or parameters")
    if not (_same_time(left.t, right.s) and _same_time(whole.s, left.s) and _same_time(whole.t, right.t)):
        raise ValueError("intervals do not chain: need [s,u], [u,t], [s,t]")
    defect = whole.second - left.second - right.second
    defect -= np.einsum("am,bn->abmn", left.first, right.first)
    return float(np.max(np.abs(defect)))


def geometric_residual(inc: RoughIncrement) -> float:
    """Max-abs defect of second[a,b] + second[b,a]^T - first[a] (x) first[b]."""
    defect = inc.second + np.transpose(inc.second, (1, 0, 3, 2))
    defect -= np.einsum("am,bn->abmn", inc.first, inc.first)
    return float(np.max(np.abs(defect)))


# ---------------------------------------------------------------------------
# second-chaos variance comparison


@dataclass(frozen=True)
class ChaosCheck:
    var_same: float
    var_indep: float
    se_same: float
    se_indep: float
    n_samples: int


def increment_covariance(hurst: float, n: int, dt: float = 1.0) -> np.ndarray:
    """Dense covariance of n consecutive increments of the driver."""
    gamma = fgn_autocovariance(hurst, dt, np.arange(n))
    return toeplitz(gamma)


def chaos_variances_exact(kernel, cov) -> tuple:
    """(same-path, independent-copy) variances of the centered bilinear form.

    For x, y Gaussian with covariance C and kernel matrix K:
        Var(x^T K x - tr(KC)) = tr(KCKC) + tr(KCK^T C)
        Var(x^T K y)          = tr(KCK^T C)
    The first never exceeds twice the second (Cauchy-Schwarz in the Frobenius
    inner product), which is the domination bound being tested.
    """
    kernel = np.asarray(kernel, dtype=float)
    cov = np.asarray(cov, dtype=float)
    kc = kernel @ cov
    var_indep = float(np.trace(kc @ kernel.T @ cov))
    var_same = float(np.trace(kc @ kc)) + var_indep
    return var_same, var_indep


def _variance_with_se(samples: np.ndarray) -> tuple:
    n = len(samples)
    dev = samples - samples.mean()
    var = float(dev @ dev / (n - 1))
    m4 = float(np.mean(dev**4))
    se = math.sqrt(max(m4 - var * var, 0.0) / n)
    return var, se


def chaos_domination_check(kernel, hurst: float, n_samples: int, seed: int, dt: float = 1.0) -> ChaosCheck:
    """Monte Carlo variances of the same-path and independent-copy forms.

    The same-path form is centered with the exact mean tr(KC) rather than the
    sample mean, so its variance estimate is unbiased for the quantity in the
    domination bound.
    """
    kernel = np.asarray(kernel, dtype=float)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
        raise ValueError("kernel must be a square matrix")
    n = kernel.shape[0]
    cov = increment_covariance(hurst, n, dt)
    mean_same = float(np.trace(kernel @ cov))
    rng = _rng_for(seed, 0, 0, purpose=_CHAOS_PURPOSE)
    scale = dt**hurst
    q_same = np.empty(n_samples)
    q_indep = np.empty(n_samples)
    for it in range(n_samples):
        x = sample_fgn_unit(hurst, n, rng)[0] * scale
        y = sample_fgn_unit(hurst, n, rng)[0] * scale
        kx = kernel @ x
        q_same[it] = x @ kx - mean_same
        q_indep[it] = y @ kx
    var_same, se_same = _variance_with_se(q_same)
    var_indep, se_indep = _variance_with_se(q_indep)
    return ChaosCheck(
        var_same=var_same,
        var_indep=var_indep,
        se_same=se_same,
        se_indep=se_indep,
        n_samples=int(n_samples),
    )


def power_fit(spans, values) -> tuple:
    """Least-squares slope and intercept of log(values) against log(spans)."""
    lx = np.log(np.asarray(spans, dtype=float))
    ly = np.log(np.asarray(values, dtype=float))
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(math.exp(intercept))
