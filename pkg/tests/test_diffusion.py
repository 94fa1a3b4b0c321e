"""Effective-diffusion tests: closed forms on the two-state chain, the
Green-Kubo route, drift correction against the product-rule formula, and the
limiting-field covariance assembly."""
import math

import numpy as np
import pytest
from scipy.special import gamma as gamma_fn

from fracavg.chain import chain_model, two_state_chain
from fracavg.coefficients import (
    ConstBasis,
    bump_basis,
    coefficient_field,
    sin_basis,
    tanh_basis,
)
from fracavg.diffusion import (
    EffectiveDiffusion,
    clip_psd,
    is_reversible,
    pair_covariance,
    pair_covariance_matrix,
    raw_kernel_covariance,
    smoothed_driver_autocovariance,
)


def scalar_two_state(hurst, values=(1.0, -1.0)):
    model = two_state_chain(1.0, 1.0)
    coeffs = np.asarray(values, dtype=float).reshape(1, 2, 1, 1)
    fld = coefficient_field([ConstBasis()], coeffs, model.mu)
    return model, fld, EffectiveDiffusion(model=model, field=fld, hurst=hurst)


def closed_form_sigma(hurst):
    # eigenvalue 2 on the centered subspace of the symmetric two-state chain
    return 0.5 * gamma_fn(2.0 * hurst + 1.0) * 2.0 ** (1.0 - 2.0 * hurst)


# ---------------------------------------------------------------------------
# pair covariance


def test_pair_covariance_half_is_centered_product():
    model = two_state_chain(1.0, 3.0)
    f = np.array([2.0, 0.0])
    g = np.array([1.0, -1.0])
    want = model.inner(model.center(f), model.center(g))
    assert pair_covariance(model, 0.5, f, g) == pytest.approx(want, abs=1e-14)


@pytest.mark.parametrize("hurst", [0.35, 0.4, 0.5, 0.75, 0.9])
def test_pair_covariance_two_state_closed_form(hurst):
    model = two_state_chain(1.0, 1.0)
    f = np.array([1.0, -1.0])
    want = gamma_fn(2.0 * hurst + 1.0) * 2.0 ** (1.0 - 2.0 * hurst)
    assert pair_covariance(model, hurst, f, f) == pytest.approx(want, rel=1e-12)


def test_pair_covariance_symmetric_and_orthogonal_modes():
    rng = np.random.default_rng(21)
    q = rng.uniform(0.3, 1.0, size=(4, 4))
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    model = chain_model(q)
    f = model.center(rng.standard_normal(4))
    g = model.center(rng.standard_normal(4))
    for h in (0.4, 0.7):
        assert pair_covariance(model, h, f, g) == pytest.approx(
            pair_covariance(model, h, g, f), rel=1e-10, abs=1e-12
        )
    # distinct eigenvectors of a reversible chain are mu-orthogonal
    rev = two_state_chain(1.0, 3.0)
    evals, vecs = np.linalg.eig(-rev.generator)
    idx = np.argsort(evals.real)
    f0, f1 = vecs.real[:, idx[0]], vecs.real[:, idx[1]]
    assert pair_covariance(rev, 0.5, f0, f1) == pytest.approx(0.0, abs=1e-12)


def test_pair_covariance_centering_violation_above_half():
    model = two_state_chain(1.0, 1.0)
    with pytest.raises(ValueError, match="mean-zero"):
        pair_covariance(model, 0.75, np.array([1.0, 0.0]), np.array([1.0, -1.0]))


def test_pair_covariance_matrix_shape():
    model = two_state_chain(1.0, 1.0)
    fs = np.array([[1.0, 2.0], [-1.0, -2.0]])
    mat = pair_covariance_matrix(model, 0.4, fs, fs)
    assert mat.shape == (2, 2)
    assert mat[0, 1] == pytest.approx(2.0 * mat[0, 0], rel=1e-12)


def test_raw_kernel_constant_identity():
    # quadrature of the raw kernel pairing vs the spectral value with the
    # measured constant Gamma(2H-1): independent routes
    model = two_state_chain(1.0, 1.0)
    f = np.array([1.0, -1.0])
    for h in (0.7, 0.9):
        got = raw_kernel_covariance(model, h, f, f)
        want = gamma_fn(2.0 * h - 1.0) * 2.0 * 2.0 ** (1.0 - 2.0 * h)
        assert got == pytest.approx(want, rel=1e-8)
    with pytest.raises(ValueError, match="H > 1/2"):
        raw_kernel_covariance(model, 0.4, f, f)


# ---------------------------------------------------------------------------
# sigma


@pytest.mark.parametrize("hurst", [0.4, 0.5, 0.75])
def test_sigma_two_state_closed_form(hurst):
    _, _, eff = scalar_two_state(hurst)
    assert eff.sigma([0.0], [0.0])[0, 0] == pytest.approx(closed_form_sigma(hurst), rel=1e-12)


def test_sigma_half_value():
    _, _, eff = scalar_two_state(0.5)
    assert eff.sigma([0.0], [0.0])[0, 0] == pytest.approx(0.5, rel=1e-14)


def test_sigma_zero_field():
    model = two_state_chain(1.0, 1.0)
    fld = coefficient_field([ConstBasis()], np.zeros((1, 2, 1, 1)), model.mu)
    eff = EffectiveDiffusion(model=model, field=fld, hurst=0.4)
    assert eff.sigma([0.3], [0.7])[0, 0] == 0.0


def test_sigma_half_keeps_constant_component():
    # constant-in-state field: classical averaging gives (1/2) c^2
    model = two_state_chain(1.0, 1.0)
    fld = coefficient_field([ConstBasis()], np.full((1, 2, 1, 1), 3.0), model.mu)
    eff = EffectiveDiffusion(model=model, field=fld, hurst=0.5)
    assert eff.sigma([0.0], [0.0])[0, 0] == pytest.approx(4.5, rel=1e-14)


def test_sigma_requires_centered_above_half():
    model = two_state_chain(1.0, 1.0)
    fld = coefficient_field([ConstBasis()], np.full((1, 2, 1, 1), 1.0), model.mu)
    with pytest.raises(ValueError, match="centered"):
        EffectiveDiffusion(model=model, field=fld, hurst=0.75)


def test_sigma_continuity_across_half():
    vals = {h: scalar_two_state(h)[2].sigma([0.0], [0.0])[0, 0] for h in (0.49, 0.5, 0.51)}
    for h in (0.49, 0.51):
        assert abs(vals[h] - vals[0.5]) / vals[0.5] < 0.01


def test_sigma_reversible_argument_swap():
    # reversible chain: sigma_ij(x, xbar) = sigma_ji(xbar, x)
    model = two_state_chain(1.0, 3.0)
    assert is_reversible(model)
    rng = np.random.default_rng(31)
    coeffs = rng.standard_normal((2, 2, 2, 1))
    coeffs -= np.tensordot(model.mu, coeffs, axes=(0, 1))[:, None]
    fld = coefficient_field([sin_basis([1.0, 0.5]), tanh_basis([0.4, -0.2])], coeffs, model.mu)
    eff = EffectiveDiffusion(model=model, field=fld, hurst=0.8)
    x, xb = np.array([0.3, -0.6]), np.array([-1.0, 0.4])
    assert np.allclose(eff.sigma(x, xb), eff.sigma(xb, x).T, atol=1e-10)


def test_sigma_psd_on_diagonal():
    model = two_state_chain(1.0, 3.0)
    rng = np.random.default_rng(32)
    coeffs = rng.standard_normal((2, 2, 2, 3))
    fld = coefficient_field([ConstBasis(), sin_basis([0.7, -0.3])], coeffs, model.mu)
    eff = EffectiveDiffusion(model=model, field=fld, hurst=0.42)
    for x in ([0.0, 0.0], [1.0, -2.0]):
        sym = eff.sigma(x, x)
        sym = 0.5 * (sym + sym.T)
        assert np.linalg.eigvalsh(sym).min() > -1e-10


# ---------------------------------------------------------------------------
# Green-Kubo route


def test_smoothed_autocovariance_half_is_gaussian():
    assert smoothed_driver_autocovariance(0.5, 0.7) == pytest.approx(
        math.exp(-0.49 / 4.0) / (2.0 * math.sqrt(math.pi)), rel=1e-12
    )


def test_smoothed_autocovariance_total_integral_below_half():
    # symmetric mollifier: int_R C_v = <eta'', 1> = 0 for H < 1/2
    from scipy.integrate import quad

    val, _ = quad(lambda s: smoothed_driver_autocovariance(0.4, s), 0.0, 60.0, limit=400)
    # one-sided integral equals half the total; the truncation tail of the
    # power law at 60 is about 2H*60^{2H-1} / 2 = 0.18, so compare to that
    tail = 0.4 * 60.0 ** (-0.2)
    assert abs(val - tail) < 5e-3


def test_green_kubo_zero_field():
    model = two_state_chain(1.0, 1.0)
    fld = coefficient_field([ConstBasis()], np.zeros((1, 2, 1, 1)), model.mu)
    eff = EffectiveDiffusion(model=model, field=fld, hurst=0.4)
    assert eff.sigma_green_kubo([0.0], [0.0], 0.1)[0, 0] == 0.0


@pytest.mark.parametrize("hurst", [0.4, 0.75])
def test_green_kubo_converges_to_sigma(hurst):
    # mollification bias scales like (lambda*delta)^{2H}; quartering delta
    # should cut the error by about 4^{2H} (3.0 at H=0.4, 8.0 at 0.75)
    _, _, eff = scalar_two_state(hurst)
    target = eff.sigma([0.0], [0.0])[0, 0]
    errs = [abs(eff.sigma_green_kubo([0.0], [0.0], d)[0, 0] - target) for d in (0.2, 0.05)]
    assert errs[1] < errs[0]
    assert errs[0] / errs[1] > 0.55 * 4.0 ** (2.0 * hurst)
    assert errs[1] < 0.2 * abs(target)


def test_green_kubo_half_matches_classical():
    # exact value at H = 1/2 is 2 e^{(lam sig)^2/2} Q(lam sig) * Sigma with
    # sig = sqrt(2) delta, so the relative error is about 10% at delta = 0.05
    _, _, eff = scalar_two_state(0.5)
    target = eff.sigma([0.0], [0.0])[0, 0]
    got = eff.sigma_green_kubo([0.0], [0.0], 0.05)[0, 0]
    assert got == pytest.approx(target, rel=0.15)
    closer = eff.sigma_green_kubo([0.0], [0.0], 0.01)[0, 0]
    assert abs(closer - target) < abs(got - target)
    assert closer == pytest.approx(target, rel=0.03)


# ---------------------------------------------------------------------------
# drift correction and generator


def test_drift_zero_for_x_independent_field():
    _, _, eff = scalar_two_state(0.4)
    assert eff.drift_correction([0.6])[0] == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("hurst", [0.4, 0.5, 0.8])
def test_drift_product_rule_closed_form(hurst):
    # F(x, y) = tanh(a x) c(y): G(x) = (Gamma(2H+1)/2) psi psi' <c, L^{1-2H} c>
    model = two_state_chain(1.0, 1.0)
    coeffs = np.array([1.0, -1.0]).reshape(1, 2, 1, 1)
    fld = coefficient_field([tanh_basis([0.9])], coeffs, model.mu)
    eff = EffectiveDiffusion(model=model, field=fld, hurst=hurst)
    x = 0.4
    psi = math.tanh(0.9 * x)
    dpsi = 0.9 / math.cosh(0.9 * x) ** 2
    want = closed_form_sigma(hurst) * psi * dpsi
    assert eff.drift_correction([x])[0] == pytest.approx(want, rel=1e-5)


def test_drift_reversible_first_argument_form():
    # with sigma_ij(x, xbar) = sigma_ji(xbar, x), differentiating the first
    # argument of the transposed entry gives the same correction
    model = two_state_chain(1.0, 3.0)
    rng = np.random.default_rng(33)
    coeffs = rng.standard_normal((2, 2, 2, 2))
    fld = coefficient_field([sin_basis([1.0, -0.4]), bump_basis([0.2, 0.0], width=1.5)], coeffs, model.mu)
    eff = EffectiveDiffusion(model=model, field=fld, hurst=0.45)
    x = np.array([0.25, -0.5])
    hx = 1e-4 * (1.0 + float(np.linalg.norm(x)))
    alt = np.zeros(2)
    for j in range(2):
        ej = np.zeros(2)
        ej[j] = 1.0
        d1 = (eff.sigma(x + hx * ej, x) - eff.sigma(x - hx * ej, x)) / (2.0 * hx)
        d2 = (eff.sigma(x + 0.5 * hx * ej, x) - eff.sigma(x - 0.5 * hx * ej, x)) / hx
        alt += ((4.0 * d2 - d1) / 3.0)[:, j]
    assert np.allclose(eff.drift_correction(x), alt, atol=1e-7)


def test_generator_constant_and_linear():
    model, fld, eff = scalar_two_state(0.4)
    drift = coefficient_field([ConstBasis()], np.array([[[0.7], [0.7]]]), model.mu)
    assert eff.generator_apply(lambda x: 5.0, [0.3], drift) == pytest.approx(0.0, abs=1e-8)
    got = eff.generator_apply(lambda x: 2.0 * x[0], [0.3], drift)
    assert got == pytest.approx(0.7 * 2.0, rel=1e-6)


def test_generator_quadratic_scalar():
    model, fld, eff = scalar_two_state(0.4)
    drift = coefficient_field([ConstBasis()], np.array([[[0.7], [0.7]]]), model.mu)
    x = 0.3
    want = 2.0 * eff.sigma([x], [x])[0, 0] + 0.7 * 2.0 * x
    got = eff.generator_apply(lambda z: z[0] ** 2, [x], drift)
    assert got == pytest.approx(want, rel=1e-6)


# ---------------------------------------------------------------------------
# field covariance


def test_w_covariance_single_point_two_state():
    for hurst in (0.4, 0.5, 0.75):
        _, _, eff = scalar_two_state(hurst)
        mat = eff.w_field_covariance([[0.0]])
        assert mat.shape == (1, 1)
        assert mat[0, 0] == pytest.approx(2.0 * closed_form_sigma(hurst), rel=1e-12)


def test_w_covariance_far_bumps_block_diagonal():
    model = two_state_chain(1.0, 1.0)
    coeffs = np.array([1.0, -1.0]).reshape(1, 2, 1, 1)
    fld = coefficient_field([bump_basis([0.0], width=0.5)], coeffs, model.mu)
    eff = EffectiveDiffusion(model=model, field=fld, hurst=0.4)
    mat = eff.w_field_covariance([[0.0], [10.0]])
    assert mat[0, 0] > 0.0
    assert abs(mat[0, 1]) < 1e-12 * mat[0, 0]
    assert abs(mat[1, 1]) < 1e-12 * mat[0, 0]


def test_w_covariance_zero_field_ok():
    model = two_state_chain(1.0, 1.0)
    fld = coefficient_field([ConstBasis()], np.zeros((1, 2, 1, 1)), model.mu)
    eff = EffectiveDiffusion(model=model, field=fld, hurst=0.4)
    assert np.allclose(eff.w_field_covariance([[0.0], [1.0]]), 0.0)


def test_w_covariance_psd_random_model():
    model = two_state_chain(1.0, 3.0)
    rng = np.random.default_rng(34)
    coeffs = rng.standard_normal((2, 2, 1, 2))
    fld = coefficient_field([sin_basis([0.8]), tanh_basis([0.5])], coeffs, model.mu)
    eff = EffectiveDiffusion(model=model, field=fld, hurst=0.45)
    mat = eff.w_field_covariance([[-1.0], [0.0], [2.0]])
    assert np.linalg.eigvalsh(mat).min() >= 0.0
    assert np.allclose(mat, mat.T)


def test_clip_psd_policy():
    good = np.diag([1.0, -1e-13])
    out = clip_psd(good)
    assert np.linalg.eigvalsh(out).min() >= 0.0
    with pytest.raises(ValueError, match="not positive semidefinite"):
        clip_psd(np.diag([1.0, -1e-3]))
