"""Slow-equation coefficient fields built from a closed basis menu.

A field is F(x, y) = sum_j psi_j(x) * c_j(y) with scalar basis functions
psi_j from a fixed menu (constant, trigonometric waves, tanh of affine forms,
Gaussian bumps), each carrying closed-form derivatives up to order four, and
per-state coefficient arrays c_j.  Diffusion-type fields have c_j of shape
(n_states, d, m); drift-type fields (the non-noise term) drop the last axis.

The closed menu keeps experiment configs serializable; arbitrary callbacks
with caller-supplied derivatives are accepted at the library layer.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from numpy.polynomial import polynomial as npoly

MAX_DERIV_ORDER = 4

# probabilists' Hermite polynomials He_n, low-to-high coefficients
_HERMITE = {
    0: np.array([1.0]),
    1: np.array([0.0, 1.0]),
    2: np.array([-1.0, 0.0, 1.0]),
    3: np.array([0.0, -3.0, 0.0, 1.0]),
    4: np.array([3.0, 0.0, -6.0, 0.0, 1.0]),
}


def _tanh_polys(max_order: int):
    """Polynomials T_k with d^k/dz^k tanh(z) = T_k(tanh(z)); recursion
    T_{k+1} = T_k' * (1 - u^2)."""
    polys = [np.array([0.0, 1.0])]  # T_0(u) = u
    one_minus_sq = np.array([1.0, 0.0, -1.0])
    for _ in range(max_order):
        polys.append(npoly.polymul(npoly.polyder(polys[-1]), one_minus_sq))
    return polys


_TANH_POLYS = _tanh_polys(MAX_DERIV_ORDER)


def _check_multi_index(ell, dim: int):
    ell = tuple(int(k) for k in np.atleast_1d(ell))
    if len(ell) != dim:
        raise ValueError(f"multi-index length {len(ell)} does not match dimension {dim}")
    if any(k < 0 for k in ell):
        raise ValueError("multi-index entries must be >= 0")
    if sum(ell) > MAX_DERIV_ORDER:
        raise ValueError(f"derivative order {sum(ell)} above supported {MAX_DERIV_ORDER}")
    return ell


@dataclass(frozen=True)
class ConstBasis:
    """psi(x) = 1."""

    name = "const"

    def params(self):
        return []

    def deriv(self, x, ell):
        x = np.asarray(x, dtype=float)
        ell = _check_multi_index(ell, x.shape[-1])
        base = np.ones(x.shape[:-1])
        return base if sum(ell) == 0 else np.zeros_like(base)


@dataclass(frozen=True)
class WaveBasis:
    """psi(x) = sin(k.x + phase); cosine is the same wave shifted by pi/2.

    Every derivative is again a shifted wave:
    D^ell psi = prod(k^ell) * sin(k.x + phase + |ell|*pi/2).
    """

    wavevector: tuple
    phase: float = 0.0

    name = "sin"

    def params(self):
        return [list(self.wavevector), self.phase]

    def deriv(self, x, ell):
        x = np.asarray(x, dtype=float)
        k = np.asarray(self.wavevector, dtype=float)
        ell = _check_multi_index(ell, x.shape[-1])
        order = sum(ell)
        amp = float(np.prod(k ** np.asarray(ell)))
        return amp * np.sin(x @ k + self.phase + order * math.pi / 2.0)


def sin_basis(wavevector, phase: float = 0.0) -> WaveBasis:
    return WaveBasis(wavevector=tuple(np.atleast_1d(wavevector).tolist()), phase=float(phase))


def cos_basis(wavevector, phase: float = 0.0) -> WaveBasis:
    return WaveBasis(
        wavevector=tuple(np.atleast_1d(wavevector).tolist()), phase=float(phase) + math.pi / 2.0
    )


@dataclass(frozen=True)
class TanhBasis:
    """psi(x) = tanh(a.x + b); derivatives via the tanh polynomial recursion."""

    slope: tuple
    offset: float = 0.0

    name = "tanh"

    def params(self):
        return [list(self.slope), self.offset]

    def deriv(self, x, ell):
        x = np.asarray(x, dtype=float)
        a = np.asarray(self.slope, dtype=float)
        ell = _check_multi_index(ell, x.shape[-1])
        order = sum(ell)
        amp = float(np.prod(a ** np.asarray(ell)))
        u = np.tanh(x @ a + self.offset)
        return amp * npoly.polyval(u, _TANH_POLYS[order])


def tanh_basis(slope, offset: float = 0.0) -> TanhBasis:
    return TanhBasis(slope=tuple(np.atleast_1d(slope).tolist()), offset=float(offset))


@dataclass(frozen=True)
class BumpBasis:
    """psi(x) = exp(-|x - center|^2 / (2 width^2)).

    Factorizes over coordinates; each one-dimensional factor differentiates to
    (-1/w)^k He_k(u) e^{-u^2/2} with u = (x_i - c_i)/w.
    """

    center: tuple
    width: float = 1.0

    name = "bump"

    def params(self):
        return [list(self.center), self.width]

    def deriv(self, x, ell):
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.center, dtype=float)
        ell = _check_multi_index(ell, x.shape[-1])
        if self.width <= 0.0:
            raise ValueError("bump width must be positive")
        u = (x - c) / self.width
        out = np.ones(x.shape[:-1])
        for i, k in enumerate(ell):
            ui = u[..., i]
            factor = npoly.polyval(ui, _HERMITE[k]) * np.exp(-0.5 * ui * ui)
            out = out * (-1.0 / self.width) ** k * factor
        return out


def bump_basis(center, width: float = 1.0) -> BumpBasis:
    return BumpBasis(center=tuple(np.atleast_1d(center).tolist()), width=float(width))


@dataclass(frozen=True)
class CallbackBasis:
    """Escape hatch for the library layer: fn(x, ell) must return the exact
    multi-index derivative.  Not serializable to config files."""

    fn: object

    name = "callback"

    def params(self):
        raise ValueError("callback bases cannot be serialized")

    def deriv(self, x, ell):
        return self.fn(np.asarray(x, dtype=float), tuple(int(k) for k in np.atleast_1d(ell)))


_BASIS_FACTORIES = {
    "const": lambda params, d: ConstBasis(),
    "sin": lambda params, d: sin_basis(params[0], params[1] if len(params) > 1 else 0.0),
    "cos": lambda params, d: cos_basis(params[0], params[1] if len(params) > 1 else 0.0),
    "tanh": lambda params, d: tanh_basis(params[0], params[1] if len(params) > 1 else 0.0),
    "bump": lambda params, d: bump_basis(params[0], params[1] if len(params) > 1 else 1.0),
}


def basis_from_spec(name: str, params, dim: int):
    """Build a menu basis from its config representation."""
    if name not in _BASIS_FACTORIES:
        raise ValueError(f"unknown basis {name!r}; menu: {sorted(_BASIS_FACTORIES)}")
    return _BASIS_FACTORIES[name](params, dim)


@dataclass(frozen=True)
class CoefficientField:
    """F(x, y) = sum_j psi_j(x) c_j(y), with the chain's stationary weights
    kept alongside for averaging and centering.

    coeffs has shape (n_basis, n_states, d, m) for diffusion-type fields and
    (n_basis, n_states, d) for drift-type fields.
    """

    basis: tuple
    coeffs: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        if self.coeffs.ndim not in (3, 4):
            raise ValueError("coeffs must have shape (J, n, d[, m])")
        if len(self.basis) != self.coeffs.shape[0]:
            raise ValueError("one coefficient block per basis function")
        if len(self.mu) != self.coeffs.shape[1]:
            raise ValueError("stationary weights must match the state count")

    @property
    def n_states(self) -> int:
        return self.coeffs.shape[1]

    @property
    def dim(self) -> int:
        return self.coeffs.shape[2]

    @property
    def n_noise(self):
        return self.coeffs.shape[3] if self.coeffs.ndim == 4 else None

    def state_values(self, x) -> np.ndarray:
        """All-state evaluation at one point: shape (n, d[, m])."""
        x = np.asarray(x, dtype=float)
        psis = np.array([b.deriv(x, (0,) * self.dim) for b in self.basis])
        return np.tensordot(psis, self.coeffs, axes=(0, 0))


def coefficient_field(basis, coeffs, mu, require_centered: bool = False, auto_center: bool = False) -> CoefficientField:
    """Package basis functions and per-state coefficient blocks.

    With require_centered, an uncentered field is an error unless auto_center
    is set, in which case the state mean is subtracted with a warning.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    mu = np.asarray(mu, dtype=float)
    fld = CoefficientField(basis=tuple(basis), coeffs=coeffs, mu=mu)
    if require_centered and not is_centered(fld):
        if not auto_center:
            raise ValueError(
                "diffusion coefficients must average to zero under the stationary law; "
                "set auto_center to subtract the mean"
            )
        warnings.warn("auto-centering an uncentered diffusion field")
        fld = center(fld)
    return fld


def is_centered(fld: CoefficientField, tol: float = 1e-10) -> bool:
    means = np.tensordot(fld.mu, fld.coeffs, axes=(0, 1))
    return float(np.max(np.abs(means))) <= tol * (1.0 + float(np.max(np.abs(fld.coeffs))))


def center(fld: CoefficientField) -> CoefficientField:
    """Subtract the stationary mean from every coefficient block."""
    means = np.tensordot(fld.mu, fld.coeffs, axes=(0, 1))
    return CoefficientField(basis=fld.basis, coeffs=fld.coeffs - means[:, None], mu=fld.mu)


def evaluate(fld: CoefficientField, x, state: int, ell=None) -> np.ndarray:
    """D^ell F(x, state): shape (d, m) for diffusion fields, (d,) for drift."""
    x = np.asarray(x, dtype=float)
    if ell is None:
        ell = (0,) * fld.dim
    psis = np.array([b.deriv(x, ell) for b in fld.basis])
    return np.tensordot(psis, fld.coeffs[:, state], axes=(0, 0))


def evaluate_batch(fld: CoefficientField, xs, states, ell=None) -> np.ndarray:
    """Vectorized evaluation at points xs[k] in states[k]: shape (N, d[, m])."""
    xs = np.asarray(xs, dtype=float)
    states = np.asarray(states, dtype=np.int64)
    if ell is None:
        ell = (0,) * fld.dim
    out = None
    for j, b in enumerate(fld.basis):
        psi = b.deriv(xs, ell)  # shape (N,)
        block = fld.coeffs[j][states]  # shape (N, d[, m])
        term = psi.reshape(psi.shape + (1,) * (block.ndim - 1)) * block
        out = term if out is None else out + term
    return out


def mu_average(fld: CoefficientField, x) -> np.ndarray:
    """Stationary average sum_y mu_y F(x, y): shape (d[, m])."""
    return np.tensordot(fld.mu, evaluate_over_states(fld, x), axes=(0, 0))


def evaluate_over_states(fld: CoefficientField, x, ell=None) -> np.ndarray:
    """D^ell F(x, y) for every state y at once: shape (n, d[, m])."""
    x = np.asarray(x, dtype=float)
    if ell is None:
        ell = (0,) * fld.dim
    psis = np.array([b.deriv(x, ell) for b in fld.basis])
    return np.tensordot(psis, fld.coeffs, axes=(0, 0))


def mu_average_batch(fld: CoefficientField, xs) -> np.ndarray:
    """Stationary average at many points at once: shape (N, d[, m])."""
    xs = np.asarray(xs, dtype=float)
    ell = (0,) * fld.dim
    psis = np.stack([b.deriv(xs, ell) for b in fld.basis])  # (J, N)
    mean_coeffs = np.tensordot(fld.mu, fld.coeffs, axes=(0, 1))  # (J, d[, m])
    return np.tensordot(psis.T, mean_coeffs, axes=(1, 0))


def decay_sup(fld: CoefficientField, kappa: float, ell=None, radius: float = 50.0, n_points: int = 2001) -> float:
    """Empirical sup of (1 + |x|)^kappa * max_y |D^ell F(x, y)| along the
    coordinate axes out to the given radius.  Reporting aid, not a proof."""
    d = fld.dim
    sup = 0.0
    ts = np.linspace(-radius, radius, n_points)
    for axis in range(d):
        xs = np.zeros((n_points, d))
        xs[:, axis] = ts
        for y in range(fld.n_states):
            vals = evaluate_batch(fld, xs, np.full(n_points, y), ell=ell)
            norms = np.max(np.abs(vals.reshape(n_points, -1)), axis=1)
            sup = max(sup, float(np.max((1.0 + np.abs(ts)) ** kappa * norms)))
    return sup
