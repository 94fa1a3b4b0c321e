"""Pathwise integration of the mollified slow/fast system and Euler-Maruyama
simulation of the limiting field-driven SDE for n-point motions.

The slow equation is the random ODE
    dX/dt = eps^{1/2-H} F(X, Y(t/eps)) dB^delta/dt + F0(X, Y(t/eps))
integrated by classical RK4 with the smoothed driver sampled on the half-step
grid and the fast chain read off at the exact stage times.  All points of an
n-point flow share one (B, Y) realization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import ChainModel, sample_trajectory
from .coefficients import CoefficientField, evaluate_batch, mu_average_batch
from .diffusion import EffectiveDiffusion
from .fbm import FbmGrid, Mollifier, check_hurst, mollified_derivative, sample_fbm, _rng_for

_BLOWUP_LIMIT = 1e8
# stream purpose for the limit-SDE increments (0..3 are taken)
_LIMIT_PURPOSE = 4


@dataclass(frozen=True)
class SlowFastSpec:
    """Full model for one slow/fast integration run."""

    field: CoefficientField
    drift: CoefficientField | None
    hurst: float
    epsilon: float
    delta: float
    chain: ChainModel
    horizon: float
    step: float

    def __post_init__(self):
        check_hurst(self.hurst)
        if self.epsilon <= 0.0 or self.delta <= 0.0:
            raise ValueError("epsilon and delta must be positive")
        if self.horizon <= 0.0 or self.step <= 0.0:
            raise ValueError("horizon and step must be positive")
        if self.step > min(self.delta, self.epsilon) / 20.0 * (1.0 + 1e-12):
            raise ValueError(
                f"step {self.step} violates the resolution rule "
                f"h <= min(delta, epsilon)/20 = {min(self.delta, self.epsilon) / 20.0}"
            )
        if self.field.coeffs.ndim != 4:
            raise ValueError("field must be diffusion-type (d x m)")
        n = round(self.horizon / self.step)
        if n < 1 or abs(n * self.step - self.horizon) > 1e-9 * self.horizon:
            raise ValueError("horizon must be an integer number of steps")

    @property
    def n_steps(self) -> int:
        return round(self.horizon / self.step)


@dataclass
class Trajectory:
    """Uniform-grid n-point path: values[k, a] is point a at times[k]."""

    times: np.ndarray
    values: np.ndarray  # (n_times, n_points, d)
    seed: int
    path_index: int

    @property
    def n_points(self) -> int:
        return self.values.shape[1]

    def endpoints(self) -> np.ndarray:
        return self.values[-1]


def _check_finite(x: np.ndarray, t: float):
    if not np.all(np.isfinite(x)) or np.abs(x).max() > _BLOWUP_LIMIT:
        raise FloatingPointError(f"slow variable blew up near t = {t:.6g}")


def _driver_arrays(spec: SlowFastSpec, seed: int, path_index: int):
    """Smoothed-driver values and chain states on the half-step grid."""
    n_half = 2 * spec.n_steps
    half_grid = FbmGrid(dt=spec.step / 2.0, n_steps=n_half)
    m = spec.field.coeffs.shape[3]
    fpath = sample_fbm(half_grid, spec.hurst, seed, n_components=m, path_index=path_index)
    moll = Mollifier(spec.delta, half_grid.dt)
    db = mollified_derivative(fpath, moll)  # (n_half + 1, m)
    chain_horizon = spec.horizon / spec.epsilon
    cpath = sample_trajectory(spec.chain, chain_horizon, seed, path_index=path_index)
    states = cpath.state_at(half_grid.times() / spec.epsilon)
    return db, states


def _rk4_batch(spec: SlowFastSpec, x0s: np.ndarray, dbs: np.ndarray, states: np.ndarray, record: bool):
    """Vectorized RK4 over a batch of driver realizations.

    dbs: (B, n_half + 1, m); states: (B, n_half + 1); x0s: (q, d).
    Returns (n_steps + 1, B, q, d) if record else the final (B, q, d).
    """
    n_steps = spec.n_steps
    h = spec.step
    batch, _, m = dbs.shape
    q, d = x0s.shape
    amp = spec.epsilon ** (0.5 - spec.hurst)
    x = np.broadcast_to(x0s, (batch, q, d)).copy()
    path = np.empty((n_steps + 1, batch, q, d)) if record else None
    if record:
        path[0] = x

    field = spec.field
    drift = spec.drift

    def rhs(xc, idx):
        y = states[:, idx]
        xs_flat = xc.reshape(batch * q, d)
        st_flat = np.repeat(y, q)
        fval = evaluate_batch(field, xs_flat, st_flat).reshape(batch, q, d, m)
        out = amp * np.einsum("bqdm,bm->bqd", fval, dbs[:, idx, :])
        if drift is not None:
            out = out + evaluate_batch(drift, xs_flat, st_flat).reshape(batch, q, d)
        return out

    for j in range(n_steps):
        i0 = 2 * j
        k1 = rhs(x, i0)
        k2 = rhs(x + 0.5 * h * k1, i0 + 1)
        k3 = rhs(x + 0.5 * h * k2, i0 + 1)
        k4 = rhs(x + h * k3, i0 + 2)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if record:
            path[j + 1] = x
        if j % 256 == 0:
            _check_finite(x, (j + 1) * h)
    _check_finite(x, spec.horizon)
    return path if record else x


def solve_slow_fast(spec: SlowFastSpec, x0_list, seed: int, path_index: int = 0) -> Trajectory:
    """One realization of the n-point slow flow, recorded on the step grid."""
    x0s = np.atleast_2d(np.asarray(x0_list, dtype=float))
    db, states = _driver_arrays(spec, seed, path_index)
    path = _rk4_batch(spec, x0s, db[None], states[None], record=True)
    times = np.arange(spec.n_steps + 1) * spec.step
    return Trajectory(times=times, values=path[:, 0], seed=int(seed), path_index=int(path_index))


def solve_slow_fast_endpoints(
    spec: SlowFastSpec,
    x0_list,
    seed: int,
    n_paths: int,
    first_path_index: int = 0,
    max_batch_floats: float = 4e7,
) -> np.ndarray:
    """Endpoints of n_paths independent realizations: shape (n_paths, q, d).

    Realization p uses path_index = first_path_index + p, so the ensemble is
    reproducible and extendable.  Drivers are generated per batch to bound
    memory (max_batch_floats counts smoothed-driver values held at once).
    """
    x0s = np.atleast_2d(np.asarray(x0_list, dtype=float))
    m = spec.field.coeffs.shape[3]
    n_half = 2 * spec.n_steps
    per_path = (n_half + 1) * m
    batch = max(1, min(n_paths, int(max_batch_floats / per_path)))
    out = np.empty((n_paths, x0s.shape[0], x0s.shape[1]))
    done = 0
    while done < n_paths:
        b = min(batch, n_paths - done)
        dbs = np.empty((b, n_half + 1, m))
        states = np.empty((b, n_half + 1), dtype=np.int64)
        for p in range(b):
            dbs[p], states[p] = _driver_arrays(spec, seed, first_path_index + done + p)
        out[done : done + b] = _rk4_batch(spec, x0s, dbs, states, record=False)
        done += b
    return out


# ---------------------------------------------------------------------------
# limiting Kunita-type SDE


def _field_sqrt_factors(effdiff: EffectiveDiffusion, x: np.ndarray) -> np.ndarray:
    """Batched symmetric square roots of the n-point field covariance at
    positions x of shape (N, q, d).  Near-zero negative eigenvalues are
    clipped; genuinely negative ones are an error."""
    n_paths, q, d = x.shape
    mat = np.empty((n_paths, q * d, q * d))
    for a in range(q):
        for b in range(q):
            s_ab = effdiff.sigma_many(x[:, a], x[:, b])
            s_ba = effdiff.sigma_many(x[:, b], x[:, a])
            mat[:, a * d : (a + 1) * d, b * d : (b + 1) * d] = s_ab + np.swapaxes(s_ba, 1, 2)
    mat = 0.5 * (mat + np.swapaxes(mat, 1, 2))
    evals, vecs = np.linalg.eigh(mat)
    scale = np.maximum(np.abs(evals).max(axis=1, keepdims=True), 1e-300)
    if np.any(evals < -1e-10 * scale):
        raise ValueError("n-point covariance is not positive semidefinite")
    evals = np.where(evals < 0.0, 0.0, evals)
    return vecs * np.sqrt(evals)[:, None, :]


def _drift_batch(effdiff: EffectiveDiffusion, x: np.ndarray) -> np.ndarray:
    """Richardson-extrapolated divergence of sigma in the second argument,
    batched over positions x of shape (N, d)."""
    n_paths, d = x.shape
    hx = 1e-4 * (1.0 + np.linalg.norm(x, axis=1, keepdims=True))
    out = np.zeros((n_paths, d))
    for j in range(d):
        ej = np.zeros(d)
        ej[j] = 1.0
        step = hx * ej

        def diff(s):
            return (effdiff.sigma_many(x, x + s) - effdiff.sigma_many(x, x - s)) / (
                2.0 * np.linalg.norm(s, axis=1)[:, None, None]
            )

        d1 = diff(step)
        d2 = diff(0.5 * step)
        out += ((4.0 * d2 - d1) / 3.0)[:, j, :]
    return out


def _em_steps(effdiff, drift_field, x0s, horizon, dt_sde, rng, n_paths, record):
    """Shared Euler-Maruyama loop: joint Gaussian increments from the field
    covariance frozen at the left endpoint (Ito convention)."""
    if dt_sde > horizon / 100.0 * (1.0 + 1e-12):
        raise ValueError("limit-SDE step must be at most horizon/100")
    q, d = x0s.shape
    n_steps = round(horizon / dt_sde)
    if abs(n_steps * dt_sde - horizon) > 1e-9 * horizon:
        raise ValueError("horizon must be an integer number of SDE steps")
    x = np.broadcast_to(x0s, (n_paths, q, d)).copy()
    sqrt_dt = math.sqrt(dt_sde)
    path = np.empty((n_steps + 1, n_paths, q, d)) if record else None
    if record:
        path[0] = x
    for k in range(n_steps):
        factors = _field_sqrt_factors(effdiff, x)
        normals = rng.standard_normal((n_paths, q * d))
        noise = np.einsum("nij,nj->ni", factors, normals).reshape(n_paths, q, d) * sqrt_dt
        drift = np.zeros((n_paths, q, d))
        for a in range(q):
            drift[:, a] = _drift_batch(effdiff, x[:, a])
            if drift_field is not None:
                drift[:, a] += mu_average_batch(drift_field, x[:, a])
        x = x + noise + drift * dt_sde
        if record:
            path[k + 1] = x
        _check_finite(x, (k + 1) * dt_sde)
    return path if record else x


def solve_limit_endpoints(
    effdiff: EffectiveDiffusion,
    drift_field: CoefficientField | None,
    x0_list,
    horizon: float,
    dt_sde: float,
    seed: int,
    n_paths: int,
    first_path_index: int = 0,
) -> np.ndarray:
    """Euler-Maruyama endpoints of the limiting n-point motion, batched over
    independent paths: shape (n_paths, q, d)."""
    x0s = np.atleast_2d(np.asarray(x0_list, dtype=float))
    rng = _rng_for(seed, first_path_index, 0, purpose=_LIMIT_PURPOSE)
    return _em_steps(effdiff, drift_field, x0s, horizon, dt_sde, rng, n_paths, record=False)


def solve_limit_npoint(
    effdiff: EffectiveDiffusion,
    drift_field: CoefficientField | None,
    x0_list,
    horizon: float,
    dt_sde: float,
    seed: int,
    path_index: int = 0,
) -> Trajectory:
    """Single recorded realization of the limiting n-point motion."""
    x0s = np.atleast_2d(np.asarray(x0_list, dtype=float))
    rng = _rng_for(seed, path_index, 0, purpose=_LIMIT_PURPOSE)
    n_steps = round(horizon / dt_sde)
    path = _em_steps(effdiff, drift_field, x0s, horizon, dt_sde, rng, 1, record=True)
    return Trajectory(
        times=np.arange(n_steps + 1) * dt_sde,
        values=path[:, 0],
        seed=int(seed),
        path_index=int(path_index),
    )
