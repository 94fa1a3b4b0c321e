import math

import numpy as np
import pytest
from scipy.integrate import quad

from fracavg.fbm import (
    EtaKernel,
    FbmGrid,
    Mollifier,
    check_hurst,
    circulant_eigenvalues,
    eta_box_weight,
    eta_dd_integral,
    eta_triangle_weights,
    fbm_covariance,
    fgn_autocovariance,
    mean_iterated_deterministic,
    mollified_derivative,
    sample_fbm,
    sample_fgn_unit,
    smoothed_derivative_from_values,
    _synthesize_fgn,
)

HURSTS = [0.35, 0.4, 0.5, 0.75, 0.9]


def toeplitz_cov(hurst, n, dt=1.0):
    gamma = fgn_autocovariance(hurst, dt, np.arange(n))
    idx = np.arange(n)
    return gamma[np.abs(idx[:, None] - idx[None, :])]


def test_hurst_range():
    check_hurst(0.4)
    for bad in (1.0 / 3.0, 1.0, 0.2, 1.3):
        with pytest.raises(ValueError):
            check_hurst(bad)


def test_fgn_autocovariance_frozen_values():
    # H = 3/4, dt = 1: gamma(1) = (2^{3/2} - 2)/2 = sqrt(2) - 1
    assert fgn_autocovariance(0.75, 1.0, [1])[0] == pytest.approx(math.sqrt(2.0) - 1.0, abs=1e-14)
    assert fgn_autocovariance(0.75, 1.0, [0])[0] == pytest.approx(1.0, abs=1e-14)
    # H = 1/2: white increments
    g = fgn_autocovariance(0.5, 0.25, np.arange(5))
    assert g[0] == pytest.approx(0.25, abs=1e-14)
    assert np.allclose(g[1:], 0.0, atol=1e-14)
    # dt scaling: gamma(k; dt) = dt^{2H} gamma(k; 1)
    g1 = fgn_autocovariance(0.4, 1.0, np.arange(8))
    g2 = fgn_autocovariance(0.4, 0.1, np.arange(8))
    assert np.allclose(g2, 0.1**0.8 * g1, rtol=1e-13)


def test_fbm_covariance_frozen_values():
    assert fbm_covariance(0.75, 1.0, 2.0) == pytest.approx(math.sqrt(2.0), abs=1e-14)
    for h in HURSTS:
        assert fbm_covariance(h, 1.3, 1.3) == pytest.approx(1.3 ** (2 * h), rel=1e-14)
        assert fbm_covariance(h, 0.0, 2.0) == pytest.approx(0.0, abs=1e-14)
    # increment variance law: Var(B_t - B_s) = |t-s|^{2H}
    h, s, t = 0.4, 0.7, 2.2
    var = fbm_covariance(h, t, t) - 2 * fbm_covariance(h, s, t) + fbm_covariance(h, s, s)
    assert var == pytest.approx(abs(t - s) ** (2 * h), rel=1e-13)


@pytest.mark.parametrize("hurst", HURSTS)
def test_circulant_embedding_nonnegative(hurst):
    for n in (64, 256, 1024):
        eigs = circulant_eigenvalues(hurst, n)
        assert eigs.min() > -1e-10 * eigs.max()


@pytest.mark.parametrize("hurst", HURSTS)
def test_synthesis_covariance_exact(hurst):
    # The synthesis map is linear in the 2n normals; pushing the identity
    # through recovers its full covariance, compared against the target.
    n = 16
    eigs = circulant_eigenvalues(hurst, n)
    rows = np.array([_synthesize_fgn(eigs, e, n) for e in np.eye(2 * n)])
    cov = rows.T @ rows
    assert np.max(np.abs(cov - toeplitz_cov(hurst, n))) < 1e-10


@pytest.mark.parametrize("hurst", [0.35, 0.75])
def test_cholesky_fallback_covariance_exact(hurst):
    from fracavg.fbm import _cholesky_fgn

    n = 24
    rows = np.array([_cholesky_fgn(hurst, n, e) for e in np.eye(n)])
    cov = rows.T @ rows
    assert np.max(np.abs(cov - toeplitz_cov(hurst, n))) < 1e-10


def test_sample_fbm_basic_properties():
    grid = FbmGrid(dt=0.01, n_steps=200)
    path = sample_fbm(grid, 0.75, seed=11, n_components=3)
    assert path.values.shape == (201, 3)
    assert np.all(path.values[0] == 0.0)
    # deterministic in (seed, path_index, component)
    again = sample_fbm(grid, 0.75, seed=11, n_components=3)
    assert np.array_equal(path.values, again.values)
    # component draw independent of how many components were requested
    solo = sample_fbm(grid, 0.75, seed=11, n_components=1)
    assert np.array_equal(solo.values[:, 0], path.values[:, 0])
    other = sample_fbm(grid, 0.75, seed=12, n_components=1)
    assert not np.array_equal(other.values[:, 0], path.values[:, 0])


def test_sample_fbm_dt_scaling():
    # same seed, different dt: values scale by dt^H exactly
    h = 0.4
    p1 = sample_fbm(FbmGrid(dt=1.0, n_steps=80), h, seed=5)
    p2 = sample_fbm(FbmGrid(dt=0.25, n_steps=80), h, seed=5)
    assert np.allclose(p2.values, 0.25**h * p1.values, rtol=1e-12)


def test_sample_methods_agree_on_small_n():
    grid = FbmGrid(dt=0.5, n_steps=32)
    auto = sample_fbm(grid, 0.9, seed=3)
    assert auto.method == "cholesky"  # n < 64 routes to the dense sampler
    forced = sample_fbm(grid, 0.9, seed=3, method="circulant")
    assert forced.method == "circulant"
    # both exact: empirical variance of B(T) over many seeds is loose-checked
    rng_vals = [
        sample_fbm(grid, 0.9, seed=s).values[-1, 0] for s in range(300)
    ]
    var = np.var(rng_vals)
    target = grid.horizon ** 1.8
    assert abs(var - target) / target < 0.35


def test_mollifier_normalization_and_symmetry():
    moll = Mollifier(delta=0.05, dt=0.01)
    assert moll.weights.sum() * moll.dt == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(moll.weights, moll.weights[::-1], rtol=1e-14)
    assert np.allclose(moll.dweights, -moll.dweights[::-1], rtol=1e-14)
    assert moll.support_halfwidth <= 6.0 * moll.delta + moll.dt
    with pytest.raises(ValueError):
        Mollifier(delta=0.03, dt=0.01)


def test_smoothed_derivative_linear_path():
    # B(t) = c t must give dB/dt == c to 1e-8 once delta >= 4 dt
    dt = 0.005
    moll = Mollifier(delta=4 * dt, dt=dt)
    c = 1.7
    k = moll.half_width
    ts = np.arange(-k, 200 + k + 1) * dt
    deriv = smoothed_derivative_from_values(c * ts, moll)
    assert np.max(np.abs(deriv - c)) < 1e-8


def test_smoothed_derivative_sine_path():
    # smoothing multiplies frequency omega by ~exp(-(omega delta)^2 / 2)
    dt = 0.002
    delta = 0.02
    omega = 3.0
    moll = Mollifier(delta=delta, dt=dt)
    k = moll.half_width
    ts = np.arange(-k, 500 + k + 1) * dt
    deriv = smoothed_derivative_from_values(np.sin(omega * ts), moll)
    interior = slice(0, 501)
    expected = omega * np.cos(omega * ts[k : k + 501]) * math.exp(-((omega * delta) ** 2) / 2)
    assert np.max(np.abs(deriv[interior] - expected)) < 1e-3


def test_mollified_derivative_interior_matches_and_deterministic():
    grid = FbmGrid(dt=0.01, n_steps=300)
    path = sample_fbm(grid, 0.4, seed=21)
    moll = Mollifier(delta=0.05, dt=grid.dt)
    d1 = mollified_derivative(path, moll)
    d2 = mollified_derivative(path, moll)
    assert np.array_equal(d1, d2)
    assert d1.shape == (301, 1)
    # interior values depend only on the path, not the continuations
    k = moll.half_width
    ext = np.zeros((301 + 2 * k, 1))
    ext[k : k + 301] = path.values
    interior = smoothed_derivative_from_values(ext, moll)
    assert np.allclose(d1[k:-k], interior[k:-k], atol=1e-12)


# -- regularized kernel integrals -------------------------------------------


def test_eta_dd_integral_constant_testfunction():
    # phi = 1 closed forms
    k = EtaKernel(0.75)
    assert eta_dd_integral(k, 0.0, 1.0, lambda t: 1.0) == pytest.approx(1.5, rel=1e-10)
    assert eta_dd_integral(k, -1.0, 1.0, lambda t: 1.0) == pytest.approx(3.0, rel=1e-10)
    k = EtaKernel(0.4)
    h = 0.4
    for a, b in [(-1.0, 1.0), (-0.5, 2.0), (0.0, 1.5)]:
        expect = 2 * h * ((-a) ** (2 * h - 1) if a < 0 else 0.0)
        expect += 2 * h * (b ** (2 * h - 1) if b > 0 else 0.0)
        assert eta_dd_integral(k, a, b, lambda t: 1.0) == pytest.approx(expect, rel=1e-9)


def test_eta_dd_integral_point_mass_at_half():
    k = EtaKernel(0.5)
    phi = lambda t: 2.0 + t
    assert eta_dd_integral(k, -1.0, 1.0, phi) == pytest.approx(4.0, abs=1e-12)
    assert eta_dd_integral(k, 0.0, 1.0, phi) == pytest.approx(2.0, abs=1e-12)


def _bump(t):
    # C^inf bump supported on (-0.8, 0.8)
    t = float(t)
    if abs(t) >= 0.8:
        return 0.0
    return math.exp(-1.0 / (1.0 - (t / 0.8) ** 2))


def _bump_dd(t, h=1e-4):
    return (_bump(t + h) - 2.0 * _bump(t) + _bump(t - h)) / h**2


@pytest.mark.parametrize("hurst", [0.4, 0.45, 0.5, 0.6, 0.75, 0.9])
def test_eta_dd_integral_by_parts_oracle(hurst):
    # For compactly supported phi, int eta'' phi = int |t|^{2H} phi''
    # (exact distributional identity, no boundary terms).
    k = EtaKernel(hurst)
    got = eta_dd_integral(k, -1.0, 1.0, _bump)
    expect, _ = quad(lambda t: abs(t) ** (2 * hurst) * _bump_dd(t), -0.8, 0.8, limit=300)
    assert got == pytest.approx(expect, rel=2e-4, abs=1e-6)


def test_eta_dd_integral_continuous_at_half():
    # the integral is differentiable in H at 1/2 (slope ~1.2%/0.01 for this
    # phi), so both side limits approach the point-mass value linearly
    phi = lambda t: 1.0 / (1.0 + t * t)
    mid = eta_dd_integral(EtaKernel(0.5), -1.0, 1.0, phi)
    for dh, tol in ((0.01, 0.02), (0.002, 0.005)):
        lo = eta_dd_integral(EtaKernel(0.5 - dh), -1.0, 1.0, phi)
        hi = eta_dd_integral(EtaKernel(0.5 + dh), -1.0, 1.0, phi)
        assert abs(lo - mid) / abs(mid) < tol
        assert abs(hi - mid) / abs(mid) < tol
    # endpoint variant too
    mid0 = eta_dd_integral(EtaKernel(0.5), 0.0, 1.0, phi)
    lo0 = eta_dd_integral(EtaKernel(0.49), 0.0, 1.0, phi)
    hi0 = eta_dd_integral(EtaKernel(0.51), 0.0, 1.0, phi)
    assert mid0 == pytest.approx(1.0, abs=1e-12)
    assert abs(lo0 - mid0) / mid0 < 0.02
    assert abs(hi0 - mid0) / mid0 < 0.02


@pytest.mark.parametrize("hurst", [0.4, 0.5, 0.75])
def test_eta_triangle_weights_total(hurst):
    k = EtaKernel(hurst)
    bounds = np.array([0.0, 0.3, 0.45, 1.1, 2.0])
    w = eta_triangle_weights(k, bounds)
    ones = np.ones(len(bounds) - 1)
    # Var(B_T) = T^{2H} = 1' W 1 (all-ones integrand)
    assert ones @ w @ ones == pytest.approx(2.0 ** (2 * hurst), rel=1e-12)
    # individual boxes agree with the closed-form second difference
    assert w[0, 2] == pytest.approx(eta_box_weight(k, 0.0, 0.3, 0.45, 1.1), rel=1e-12)
    # a lone interval reproduces the increment variance
    assert w[3, 3] == pytest.approx(0.9 ** (2 * hurst), rel=1e-12)


@pytest.mark.parametrize("hurst", [0.4, 0.5, 0.75])
def test_mean_iterated_constant_integrands(hurst):
    # f = g = 1: the iterated integral is (B_t - B_s)^2 / 2, mean |t-s|^{2H}/2.
    k = EtaKernel(hurst)
    got = mean_iterated_deterministic(k, lambda u: 1.0, lambda u: 1.0, 0.0, 1.0)
    assert got == pytest.approx(0.5, rel=1e-7)
    got = mean_iterated_deterministic(k, lambda u: 1.0, lambda u: 1.0, 0.5, 2.0)
    assert got == pytest.approx(0.5 * 1.5 ** (2 * hurst), rel=1e-7)


@pytest.mark.parametrize("hurst", [0.4, 0.5, 0.6, 0.75])
def test_mean_iterated_linear_integrand(hurst):
    # f(u) = u, g = 1 on [0,1]: mean is 1 / (2(2H+1)).
    k = EtaKernel(hurst)
    got = mean_iterated_deterministic(k, lambda u: u, lambda u: 1.0, 0.0, 1.0)
    assert got == pytest.approx(1.0 / (2.0 * (2.0 * hurst + 1.0)), rel=1e-6)


def test_mean_iterated_continuous_at_half():
    f = lambda u: math.sin(u)
    g = lambda u: math.cos(u)
    mid = mean_iterated_deterministic(EtaKernel(0.5), f, g, 0.0, 1.0)
    lo = mean_iterated_deterministic(EtaKernel(0.48), f, g, 0.0, 1.0)
    hi = mean_iterated_deterministic(EtaKernel(0.52), f, g, 0.0, 1.0)
    assert abs(lo - mid) / abs(mid) < 0.05
    assert abs(hi - mid) / abs(mid) < 0.05
