"""Finite-sample score and its condensation (memorization) times.

With training points ``y^1..y^N`` the noised empirical distribution is the
isotropic mixture ``(1/N) sum_mu N(y^mu, t I)`` and its score is

    s(x, t) = sum_mu w_mu(x, t) (y^mu - x) / t,   w = softmax(-|x - y^mu|^2 / 2t).

Viewed as a random energy model with ``N = exp(alpha d)`` levels, the
mixture condenses onto a handful of points below a position dependent time
``t_c(x)``. ``zeta`` is the per-dimension log moment generating function of
the energies, and the condensation condition is
``alpha + zeta(1) - zeta'(1) = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._rng import stream

EXACT = "exact"
APPROXIMATE = "approximate"
_MODES = (EXACT, APPROXIMATE)


def _check_t(t):
    t = float(t)
    if not t > 0 or not np.isfinite(t):
        raise ValueError(f"diffusion time must be positive and finite, got {t}")
    return t


class EmpiricalScore(BaseEstimator):
    """Score of the Gaussian-smoothed empirical distribution of a training set.

    Parameters
    ----------
    chunk_size : int
        Number of query points processed at once, bounding memory at
        ``chunk_size * N`` floats.

    Attributes
    ----------
    points_ : ndarray (N, d)
    sq_norms_ : ndarray (N,)
    """

    def __init__(self, chunk_size=256):
        self.chunk_size = chunk_size

    def fit(self, Y, y=None):
        Y = check_array(Y, dtype=float, ensure_min_samples=1)
        self.points_ = Y
        self.sq_norms_ = np.einsum("ij,ij->i", Y, Y)
        self.n_features_in_ = Y.shape[1]
        return self

    @property
    def d(self):
        return self.n_features_in_

    def _log_weights(self, X, t):
        d2 = np.einsum("ij,ij->i", X, X)[:, None] - 2.0 * X @ self.points_.T + self.sq_norms_[None, :]
        return -0.5 * np.maximum(d2, 0.0) / t

    def _queries(self, x):
        check_is_fitted(self, "points_")
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d or x.ndim > 2:
            raise ValueError(f"expected points of length {self.d}, got shape {x.shape}")
        return np.atleast_2d(x), x.ndim == 1

    def score(self, x, t):
        """Score at ``x`` (shape (d,) or (n, d))."""
        t = _check_t(t)
        X, single = self._queries(x)
        out = np.empty_like(X)
        for lo in range(0, X.shape[0], self.chunk_size):
            Xc = X[lo:lo + self.chunk_size]
            lw = self._log_weights(Xc, t)
            lw -= lw.max(axis=1, keepdims=True)
            w = np.exp(lw)
            w /= w.sum(axis=1, keepdims=True)
            out[lo:lo + self.chunk_size] = (w @ self.points_ - Xc) / t
        return out[0] if single else out

    __call__ = score

    def log_density(self, x, t):
        t = _check_t(t)
        X, single = self._queries(x)
        N = self.points_.shape[0]
        val = (logsumexp(self._log_weights(X, t), axis=1) - np.log(N)
               - 0.5 * self.d * np.log(2 * np.pi * t))
        return val[0] if single else val

    def weights(self, x, t):
        """Mixture responsibilities of the training points at ``x``."""
        t = _check_t(t)
        X, single = self._queries(x)
        lw = self._log_weights(X, t)
        w = np.exp(lw - logsumexp(lw, axis=1, keepdims=True))
        return w[0] if single else w


def smoothed_jacobian(score, x, t, basis=None, atol=1e-10):
    """Finite-difference Jacobian at probe scale ``sqrt(t)``.

    Column ``j`` of the probe matrix is ``(s(x + sqrt(t) e_j) - s(x)) / sqrt(t)``
    for the orthonormal directions ``e_j`` (columns of ``basis``). The result
    is returned in ambient coordinates, ``S @ basis.T``, so it equals the
    Jacobian exactly when the field is linear.
    """
    t = _check_t(t)
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    E = np.eye(d) if basis is None else np.asarray(basis, dtype=float)
    if E.shape != (d, d) or np.max(np.abs(E.T @ E - np.eye(d))) > atol:
        raise ValueError("basis must be a d x d matrix with orthonormal columns")
    h = np.sqrt(t)
    base = score(x, t)
    S = (score(x[None, :] + h * E.T, t) - base[None, :]).T / h
    return S @ E.T


# ---------------------------------------------------------------- condensation


def zeta(lam, t, variances, x):
    """Per-dimension energy cumulant ``zeta(lam)`` and its derivative in ``lam``."""
    t = _check_t(t)
    s = np.asarray(variances, dtype=float)
    x = np.asarray(x, dtype=float)
    if s.shape != x.shape:
        raise ValueError("variances and x must have the same length")
    u = 1.0 + lam * s / t
    if np.any(u <= 0):
        raise ValueError("1 + lam sigma^2 / t must be positive in every dimension")
    c = x**2 * s / (2 * t * t)
    z = np.mean(-0.5 * np.log(u) + lam**2 * c / u)
    dz = np.mean(-0.5 * (s / t) / u + lam * c * (2.0 + lam * s / t) / u**2)
    return float(z), float(dz)


def moments(variances, x):
    """``(r2, r4, omega2)``: mean variance, mean squared variance, directional variance."""
    s = np.asarray(variances, dtype=float)
    x = np.asarray(x, dtype=float)
    return float(np.mean(s)), float(np.mean(s**2)), float(np.mean(x**2 * s))


def t_c_approx(variances, x, alpha):
    """Small-``alpha`` condensation time ``sqrt((r4/2 + omega^2) / (2 alpha))``."""
    _, r4, om2 = moments(variances, x)
    if alpha == 0:
        return np.inf
    return float(np.sqrt((0.5 * r4 + om2) / (2 * alpha)))


def t_c_exact(variances, x, alpha, t_min=1e-8, t_max=1e8):
    """Largest root in ``t`` of ``alpha + zeta(1) - zeta'(1)``.

    The bracket is found by stepping down from ``t_max`` by factors of 10 until
    the condition changes sign, then refined with Brent's method.
    """
    def cond(t):
        z, dz = zeta(1.0, t, variances, x)
        return alpha + z - dz

    hi = t_max
    f_hi = cond(hi)
    while hi > t_min:
        lo = max(hi / 10.0, t_min)
        f_lo = cond(lo)
        if np.sign(f_lo) != np.sign(f_hi):
            return float(brentq(cond, lo, hi, xtol=1e-14, rtol=1e-12))
        hi, f_hi = lo, f_lo
    raise ValueError(f"no condensation time in [{t_min}, {t_max}] for alpha={alpha}")


@dataclass(frozen=True)
class CondensationReport:
    t_c_exact: float | None
    t_c_approx: float
    omega2: float
    r2: float
    r4: float
    alpha: float
    t: float | None = None
    participation_Y: float | None = None
    N_eff: float | None = None

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def participation(beta, beta_c):
    """Participation ratio ``Y = 1 - beta_c/beta`` and effective count ``beta/(beta - beta_c)``.

    Outside the condensed phase (``beta <= beta_c``) exponentially many points
    contribute; this is reported as ``(0.0, inf)``.
    """
    if beta <= 0 or beta_c < 0:
        raise ValueError("beta must be positive and beta_c non-negative")
    if beta <= beta_c:
        return 0.0, np.inf
    return 1.0 - beta_c / beta, beta / (beta - beta_c)


def condensation_time(variances, x, alpha, mode=EXACT, t=None):
    """Condensation report at position ``x``.

    ``mode="exact"`` solves the condensation condition numerically and also
    reports the approximation; ``mode="approximate"`` skips the root search.
    When ``t`` is given the participation ratio at ``beta = 1/t`` is filled in
    using the time of the selected mode.
    """
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    s = np.asarray(variances, dtype=float)
    if not np.any(s > 0):
        raise ValueError("at least one variance must be positive")
    r2, r4, om2 = moments(s, x)
    approx = t_c_approx(s, x, alpha)
    exact = t_c_exact(s, x, alpha) if mode == EXACT else None
    Y = n_eff = None
    if t is not None:
        t = _check_t(t)
        tc = exact if mode == EXACT else approx
        Y, n_eff = participation(1.0 / t, 1.0 / tc)
    return CondensationReport(exact, approx, om2, r2, r4, float(alpha), t, Y, n_eff)


def critical_beta(variances, x, alpha, mode=APPROXIMATE):
    """``1 / t_c(x)``; zero when ``alpha == 0`` (a single point is always condensed)."""
    if alpha == 0:
        return 0.0
    tc = t_c_exact(variances, x, alpha) if mode == EXACT else t_c_approx(variances, x, alpha)
    return 1.0 / tc


@dataclass(frozen=True, eq=False)
class MemorizedJacobian:
    """Sampled memorization-phase Jacobian and its singular values.

    ``singular_values`` are those of the sampled ``W`` and
    ``approx_singular_values`` the closed-form per-direction estimate, both
    in decreasing order and divided by ``beta`` when normalized.
    """

    W: np.ndarray
    beta: float
    beta_c0: float
    beta_c: np.ndarray
    singular_values: np.ndarray
    approx_singular_values: np.ndarray
    normalized: bool

    def eigenvalues(self):
        """Eigenvalues of ``-sqrt(W^T W)`` in increasing order."""
        return -self.singular_values


def memorized_jacobian_sample(variances, t, alpha, seed, mode=APPROXIMATE, normalize=True):
    """Sample ``W_ij`` under independent Gaussian fluctuations at 0 and ``e_j/sqrt(beta)``.

    Mean ``-beta/(1 + beta s_i)`` on the diagonal and variance
    ``beta^2 s_i/(1 + beta s_i) [max(0, beta - beta_c(0)) + max(0, beta - beta_c(e_j/sqrt(beta)))]``
    for every entry, with ``s_i`` the variance of direction ``i``.
    """
    t = _check_t(t)
    s = np.asarray(variances, dtype=float)
    d = s.size
    beta = 1.0 / t
    bc0 = critical_beta(s, np.zeros(d), alpha, mode)
    bc = np.empty(d)
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0 / np.sqrt(beta)
        bc[j] = critical_beta(s, e, alpha, mode)
    excess = max(0.0, beta - bc0) + np.maximum(0.0, beta - bc)
    pref = beta**2 * s / (1.0 + beta * s)
    mean = -beta / (1.0 + beta * s)
    rng = stream(seed, 2)
    W = np.diag(mean) + rng.standard_normal((d, d)) * np.sqrt(pref[:, None] * excess[None, :])
    sv = np.linalg.svd(W, compute_uv=False)
    # beta^4 (s^-1 + beta)^-2 equals pref^2
    approx = np.sort(np.sqrt(mean**2 + pref**2 * excess**2))[::-1]
    if normalize:
        sv = sv / beta
        approx = approx / beta
    return MemorizedJacobian(W, beta, bc0, bc, sv, approx, normalize)
