"""Effective diffusion of the slow variable: spectral formula, Green-Kubo
route, drift correction, and the covariance of the limiting Gaussian field.

Conventions at the boundary exponent H = 1/2 (where the fractional power
degenerates to a projection): the pairwise covariance uses centered parts,
while the diffusion matrix keeps the full product so that constant-in-state
coefficients reproduce classical averaging.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import quad
from scipy.linalg import expm
from scipy.special import gamma as gamma_fn

from .chain import ChainModel, fractional_power, sup_norm
from .coefficients import CoefficientField, evaluate_over_states, is_centered, mu_average
from .fbm import EtaKernel, check_hurst, eta_dd_integral

_QUAD_OPTS = dict(epsabs=1e-10, epsrel=1e-10, limit=400)

# unit-scale mollifier autocorrelation: Gaussian with variance 2, truncated
# where the underlying bump is (6 sigma each side)
_PSI_HALFWIDTH = 12.0


def _psi_unit(u):
    return np.exp(-(u * u) / 4.0) / (2.0 * math.sqrt(math.pi))


def half_gamma_constant(hurst: float) -> float:
    """The canonical prefactor Gamma(2H+1)/2."""
    return 0.5 * gamma_fn(2.0 * hurst + 1.0)


def pair_covariance(model: ChainModel, hurst: float, f, g) -> float:
    """C(f, g) = (Gamma(2H+1)/2) (<f, L^{1-2H} g>_mu + <L^{1-2H} f, g>_mu).

    At H = 1/2 this is the stationary covariance of the centered parts.  For
    H > 1/2 both observables must be mean-zero.
    """
    h = check_hurst(hurst)
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if h == 0.5:
        return model.inner(model.center(f), model.center(g))
    alpha = 1.0 - 2.0 * h
    cross = model.inner(f, fractional_power(model, alpha, g)) + model.inner(
        fractional_power(model, alpha, f), g
    )
    return half_gamma_constant(h) * cross


def pair_covariance_matrix(model: ChainModel, hurst: float, fs, gs) -> np.ndarray:
    """Componentwise version: entry (k, l) is C(fs[:, k], gs[:, l])."""
    fs = np.atleast_2d(np.asarray(fs, dtype=float).T).T
    gs = np.atleast_2d(np.asarray(gs, dtype=float).T).T
    out = np.empty((fs.shape[1], gs.shape[1]))
    for k in range(fs.shape[1]):
        for l in range(gs.shape[1]):
            out[k, l] = pair_covariance(model, hurst, fs[:, k], gs[:, l])
    return out


def raw_kernel_covariance(model: ChainModel, hurst: float, f, g) -> float:
    """Quadrature of int_0^inf (<f, P_t g> + <g, P_t f>)_mu t^{2H-2} dt for
    H > 1/2 and mean-zero f, g: the un-normalized kernel pairing, kept
    separate from pair_covariance (the two differ by a fixed H-dependent
    constant; reported side by side, never substituted)."""
    h = check_hurst(hurst)
    if h <= 0.5:
        raise ValueError("raw kernel pairing needs H > 1/2")
    f = model.center(np.asarray(f, dtype=float))
    g = model.center(np.asarray(g, dtype=float))
    q = model.generator
    mu = model.mu

    def cross(t):
        pt = expm(q * t)
        return float(mu @ (f * (pt @ g))) + float(mu @ (g * (pt @ f)))

    t_split = min(1.0 / model.gap, 40.0 / model.gap)
    val, _ = quad(cross, 0.0, t_split, weight="alg", wvar=(2.0 * h - 2.0, 0.0), **_QUAD_OPTS)
    val2, _ = quad(lambda t: cross(t) * t ** (2.0 * h - 2.0), t_split, 40.0 / model.gap, **_QUAD_OPTS)
    return val + val2


@dataclass
class EffectiveDiffusion:
    """Bilinear diffusion data for a chain/coefficient pair at one Hurst
    value, with the state-space contractions precomputed.

    gram[j, j2, i, i2] = sum_k <c_j(., i, k), L^{1-2H} c_j2(., i2, k)>_mu
    so that sigma(x, xbar) = (Gamma(2H+1)/2) sum_{j,j2} psi_j(x)
    psi_j2(xbar) gram[j, j2].
    """

    model: ChainModel
    field: CoefficientField
    hurst: float
    gram: np.ndarray = dc_field(init=False, repr=False)

    def __post_init__(self):
        h = check_hurst(self.hurst)
        coeffs = self.field.coeffs
        if coeffs.ndim != 4:
            raise ValueError("effective diffusion needs a diffusion-type field")
        if h > 0.5 and not is_centered(self.field):
            raise ValueError("H > 1/2 requires a centered diffusion field")
        n_basis, n, d, m = coeffs.shape
        alpha = 1.0 - 2.0 * h
        lcols = np.empty_like(coeffs)
        for j in range(n_basis):
            for i in range(d):
                for k in range(m):
                    col = coeffs[j, :, i, k]
                    # H = 1/2 keeps the constant component (classical averaging)
                    lcols[j, :, i, k] = col if h == 0.5 else fractional_power(self.model, alpha, col)
        weighted = self.model.mu[None, :, None, None] * coeffs
        self.gram = np.einsum("jyik,qylk->jqil", weighted, lcols)

    def basis_values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ell = (0,) * self.field.dim
        return np.array([b.deriv(x, ell) for b in self.field.basis])

    def sigma(self, x, xbar) -> np.ndarray:
        """d x d effective diffusion matrix at the argument pair."""
        px = self.basis_values(x)
        py = self.basis_values(xbar)
        return half_gamma_constant(self.hurst) * np.einsum("j,q,jqil->il", px, py, self.gram)

    def sigma_many(self, xs, xbars) -> np.ndarray:
        """Batched sigma over paired point arrays of shape (N, d)."""
        xs = np.asarray(xs, dtype=float)
        xbars = np.asarray(xbars, dtype=float)
        ell = (0,) * self.field.dim
        px = np.stack([b.deriv(xs, ell) for b in self.field.basis], axis=-1)
        py = np.stack([b.deriv(xbars, ell) for b in self.field.basis], axis=-1)
        return half_gamma_constant(self.hurst) * np.einsum("nj,nq,jqil->nil", px, py, self.gram)

    def sigma_green_kubo(self, x, xbar, delta: float) -> np.ndarray:
        """Green-Kubo route: int_0^T R_delta(t) <F(x,.) (P_t F)(xbar,.)> dt
        with R_delta(t) = delta^{2H-2} C_v(t/delta) built from the smoothed
        driver's autocovariance.  Constant modes are handled in closed form
        (their R_delta integral is 0 below H = 1/2 and 1/2 at H = 1/2)."""
        if delta <= 0.0:
            raise ValueError("delta must be positive")
        h = self.hurst
        model = self.model
        coeffs = self.field.coeffs
        n_basis, n, d, m = coeffs.shape
        if n == 1:
            evals = np.array([0.0 + 0.0j])
            vecs = np.eye(1, dtype=complex)
        else:
            evals, vecs = np.linalg.eig(-model.generator)
        winv = np.linalg.inv(vecs)
        zero = np.abs(evals) < 1e-8 * max(1.0, sup_norm(model.generator))

        t_max = max(40.0 / model.gap, 50.0 * delta) if model.gap != math.inf else 50.0 * delta
        mode_integrals = np.empty(len(evals), dtype=complex)
        for l, lam in enumerate(evals):
            if zero[l]:
                if h > 0.5:
                    mode_integrals[l] = 0.0  # field is centered, coefficient vanishes
                elif h == 0.5:
                    mode_integrals[l] = 0.5  # one-sided mass of the nascent delta
                else:
                    mode_integrals[l] = 0.0  # symmetric mollifier: total integral is 0
                continue
            mode_integrals[l] = _smoothed_kernel_laplace(h, delta, complex(lam), t_max)

        px = self.basis_values(x)
        py = self.basis_values(xbar)
        fx = np.einsum("j,jyik->yik", px, coeffs)  # F(x, y)
        gy = np.einsum("j,jyik->yik", py, coeffs)  # F(xbar, y)
        modal = (winv @ gy.reshape(n, d * m)).reshape(len(evals), d, m)
        front = np.einsum("y,yik,yl->lik", model.mu, fx, vecs)
        out = np.einsum("lik,ljk,l->ij", front, modal, mode_integrals)
        if np.abs(out.imag).max() > 1e-9 * max(1.0, np.abs(out).max()):
            raise FloatingPointError("Green-Kubo assembly produced a non-real matrix")
        return out.real

    def drift_correction(self, x) -> np.ndarray:
        """G_i(x): divergence of sigma in its second argument on the diagonal,
        by centered differences with one Richardson step."""
        x = np.asarray(x, dtype=float)
        d = self.field.dim
        hx = 1e-4 * (1.0 + float(np.linalg.norm(x)))
        out = np.zeros(d)
        for j in range(d):
            ej = np.zeros(d)
            ej[j] = 1.0

            def diff(step):
                return (self.sigma(x, x + step * ej) - self.sigma(x, x - step * ej)) / (2.0 * step)

            d1 = diff(hx)
            d2 = diff(hx / 2.0)
            grad = (4.0 * d2 - d1) / 3.0
            out += grad[j, :]
        return out

    def w_field_covariance(self, points) -> np.ndarray:
        """Per-unit-time covariance of the limiting field at the given
        points: block (a, b) is sigma(x_a, x_b) + sigma(x_b, x_a)^T.  The
        assembled matrix is validated and near-zero negative eigenvalues are
        clipped."""
        points = [np.atleast_1d(np.asarray(p, dtype=float)) for p in points]
        if len(points) < 1:
            raise ValueError("need at least one point")
        d = self.field.dim
        q = len(points)
        mat = np.empty((q * d, q * d))
        for a in range(q):
            for b in range(q):
                s_ab = self.sigma(points[a], points[b])
                s_ba = self.sigma(points[b], points[a])
                mat[a * d : (a + 1) * d, b * d : (b + 1) * d] = s_ab + s_ba.T
        return clip_psd(0.5 * (mat + mat.T))

    def generator_apply(self, g, x, drift_field: CoefficientField | None = None) -> float:
        """Limit-generator diagnostic:
        (A g)(x) = G . grad g + tr(sigma(x,x) hess g) + Fbar0 . grad g,
        with grad and hessian of g taken by central differences."""
        x = np.asarray(x, dtype=float)
        d = self.field.dim
        hx = 1e-4 * (1.0 + float(np.linalg.norm(x)))
        grad = np.empty(d)
        hess = np.empty((d, d))
        g0 = float(g(x))
        for i in range(d):
            ei = np.zeros(d)
            ei[i] = 1.0
            gp = float(g(x + hx * ei))
            gm = float(g(x - hx * ei))
            grad[i] = (gp - gm) / (2.0 * hx)
            hess[i, i] = (gp - 2.0 * g0 + gm) / hx**2
        for i in range(d):
            for j in range(i + 1, d):
                ei = np.zeros(d)
                ei[i] = 1.0
                ej = np.zeros(d)
                ej[j] = 1.0
                gpp = float(g(x + hx * (ei + ej)))
                gpm = float(g(x + hx * (ei - ej)))
                gmp = float(g(x - hx * (ei - ej)))
                gmm = float(g(x - hx * (ei + ej)))
                hess[i, j] = hess[j, i] = (gpp - gpm - gmp + gmm) / (4.0 * hx**2)
        total = float(self.drift_correction(x) @ grad)
        total += float(np.sum(self.sigma(x, x) * hess.T))
        if drift_field is not None:
            total += float(mu_average(drift_field, x) @ grad)
        return total


def smoothed_driver_autocovariance(hurst: float, s: float) -> float:
    """C_v at unit mollifier scale: half the pairing of the kernel second
    derivative with the mollifier autocorrelation shifted to s.  Scales to
    physical delta as delta^{2H-2} C_v(t/delta)."""
    h = check_hurst(hurst)
    s = abs(float(s))
    kern = EtaKernel(h)
    lo, hi = s - _PSI_HALFWIDTH, s + _PSI_HALFWIDTH
    if h == 0.5:
        return float(_psi_unit(s))
    if lo >= 0.0:
        # away from the origin the kernel is classical
        val, _ = quad(lambda r: _psi_unit(r - s) * kern.eta_dd_pointwise(r), lo, hi, **_QUAD_OPTS)
        return 0.5 * val
    return 0.5 * eta_dd_integral(kern, lo, hi, lambda r: _psi_unit(r - s))


def _smoothed_kernel_laplace(hurst: float, delta: float, lam: complex, t_max: float) -> complex:
    """int_0^{t_max} R_delta(t) e^{-lam t} dt with
    R_delta(t) = delta^{2H-2} C_v(t/delta)."""
    s_max = t_max / delta
    scale = delta ** (2.0 * hurst - 1.0)

    def integrand_re(s):
        return smoothed_driver_autocovariance(hurst, s) * math.exp(-lam.real * delta * s) * math.cos(
            lam.imag * delta * s
        )

    def integrand_im(s):
        return -smoothed_driver_autocovariance(hurst, s) * math.exp(-lam.real * delta * s) * math.sin(
            lam.imag * delta * s
        )

    pieces = np.unique(np.clip([0.0, _PSI_HALFWIDTH, s_max], 0.0, s_max))
    re = im = 0.0
    for a, b in zip(pieces[:-1], pieces[1:]):
        val, _ = quad(integrand_re, a, b, **_QUAD_OPTS)
        re += val
        if lam.imag != 0.0:
            val, _ = quad(integrand_im, a, b, **_QUAD_OPTS)
            im += val
    return scale * complex(re, im)


def clip_psd(mat: np.ndarray, clip_rel: float = 1e-12, fail_rel: float = 1e-10) -> np.ndarray:
    """Validate a symmetric matrix as PSD up to rounding: eigenvalues in
    (-clip_rel*|M|, 0) are set to 0; anything below -fail_rel*|M| is an
    error."""
    mat = np.asarray(mat, dtype=float)
    evals, vecs = np.linalg.eigh(mat)
    scale = max(np.abs(evals).max(), 1e-300)
    if evals.min() < -fail_rel * scale:
        raise ValueError(
            f"matrix is not positive semidefinite: eigenvalue {evals.min():.3e} "
            f"with scale {scale:.3e}"
        )
    clipped = np.where((evals > -clip_rel * scale) & (evals < 0.0), 0.0, evals)
    return (vecs * clipped) @ vecs.T


def is_reversible(model: ChainModel, tol: float = 1e-10) -> bool:
    """Detailed balance check mu_i q_ij = mu_j q_ji."""
    q = model.generator
    flux = model.mu[:, None] * q
    return sup_norm(flux - flux.T) <= tol * (1.0 + sup_norm(flux))
