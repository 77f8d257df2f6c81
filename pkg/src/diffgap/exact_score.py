"""Exact score of the variance-exploding linear Gaussian model.

At time ``t`` the noised data follow ``N(0, F F^T + t I)``, so the score is
linear, ``s(x, t) = W_t x / t``, with

    W_t = (1/t) F [I_m + F^T F / t]^{-1} F^T - I_d.

In the eigenbasis of ``F F^T`` the matrix ``W_t`` is diagonal with entries
``r = -t / (t + gamma)``, which is how it is stored and applied here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectrum import SpectrumResult

FINAL = "final"
INTERMEDIATE = "intermediate"


def _check_t(t):
    t = float(t)
    if not t > 0 or not np.isfinite(t):
        raise ValueError(f"diffusion time must be positive and finite, got {t}")
    return t


def r_transform(gamma, t):
    """Eigenvalue of ``W_t`` for an eigenvalue ``gamma`` of ``F F^T``."""
    gamma = np.asarray(gamma, dtype=float)
    return -t / (t + gamma)


def gamma_from_r(r, t):
    """Inverse of :func:`r_transform` on (-1, 0)."""
    r = np.asarray(r, dtype=float)
    return -t * (1.0 + r) / r


class ExactScore:
    """Closed-form score field of a :class:`LinearManifoldModel`.

    Calling the instance evaluates the score on one point of shape (d,) or a
    batch of shape (n, d).
    """

    def __init__(self, model):
        self.model = model
        self.gammas = model.gammas
        self.eigvecs = model.eigvecs
        rank = int(np.sum(model.gammas > 0))
        self._U = model.eigvecs[:, :rank]
        self._g = model.gammas[:rank]

    @property
    def d(self):
        return self.model.d

    def _as_points(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d or x.ndim > 2:
            raise ValueError(f"expected points of length {self.d}, got shape {x.shape}")
        return x

    def w_apply(self, x, t):
        """Apply ``W_t`` to ``x`` using ``W_t = -I + U diag(gamma/(t+gamma)) U^T``."""
        t = _check_t(t)
        x = self._as_points(x)
        coef = x @ self._U
        coef *= self._g / (t + self._g)
        return coef @ self._U.T - x

    def score(self, x, t):
        t = _check_t(t)
        return self.w_apply(x, t) / t

    __call__ = score

    def w_matrix(self, t):
        """Dense ``W_t``; intended for checks on small models."""
        t = _check_t(t)
        V = self.eigvecs
        M = (V * r_transform(self.gammas, t)) @ V.T
        # averaging with the transpose makes the symmetry exact in floating point
        return 0.5 * (M + M.T)

    def jacobian(self, t):
        """Dense score Jacobian ``W_t / t``."""
        return self.w_matrix(t) / _check_t(t)

    def jacobian_eigenvalues(self, t):
        """Eigenvalues of ``W_t`` sorted ascending (orthogonal directions give -1)."""
        t = _check_t(t)
        vals = np.sort(r_transform(self.gammas, t))
        return SpectrumResult(vals, source="exact", normalization="W_t", t=t)

    def log_density(self, x, t):
        """Log-density of ``N(0, F F^T + t I)``."""
        t = _check_t(t)
        x = self._as_points(x)
        c = x @ self.eigvecs
        lam = self.gammas + t
        quad = np.sum(c**2 / lam, axis=-1)
        return -0.5 * (quad + np.sum(np.log(lam)) + self.d * np.log(2 * np.pi))

    def consolidation_score(self, x, t, rtol=1e-8):
        """Small-``t`` form ``(Pi - I) x / t`` with ``Pi`` the projector onto col(F)."""
        t = _check_t(t)
        x = self._as_points(x)
        m = self.model.m
        g = self.gammas
        if g[m - 1] <= rtol * g[0]:
            raise ValueError("F is rank deficient; the manifold projector is undefined")
        U = self.eigvecs[:, :m]
        return ((x @ U) @ U.T - x) / t


@dataclass(frozen=True)
class GapReport:
    """Width of a spectral gap and its characteristic times.

    ``t_onset`` applies to the final gap, ``t_in``/``t_fin``/``t_max`` to an
    intermediate gap. All times refer to the threshold width ``delta``.
    """

    gap_width: float
    gap_kind: str
    t: float
    delta: float | None = None
    t_onset: float | None = None
    t_in: float | None = None
    t_fin: float | None = None
    t_max: float | None = None
    t_open: float | None = None
    t_close: float | None = None

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def mp_edges(sigma2, alpha_m):
    """Bulk edges ``sigma^2 (1 -+ 1/sqrt(alpha_m))^2`` of the nonzero eigenvalues of ``F F^T``."""
    if not alpha_m > 0:
        raise ValueError(f"alpha_m must be positive, got {alpha_m}")
    k = 1.0 / np.sqrt(alpha_m)
    return sigma2 * (1.0 - k) ** 2, sigma2 * (1.0 + k) ** 2


def final_gap(sigma2, alpha_m, t, delta=0.5):
    """Final-gap width ``gamma_+/(t + gamma_+)`` for a single latent variance.

    ``gamma_+`` is the upper bulk edge; the gap is the distance between the
    atom at ``r = -1`` and the bulk edge nearest to it. ``t_onset`` is the
    time at which the width reaches ``delta``.
    """
    if not alpha_m > 0:
        raise ValueError(f"alpha_m must be positive, got {alpha_m}")
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    g_hi = mp_edges(sigma2, alpha_m)[1]
    width = g_hi / (t + g_hi)
    return GapReport(float(width), FINAL, float(t), delta=delta,
                     t_onset=float(g_hi * (1.0 - delta) / delta))


def intermediate_gap_width(gamma_hi, gamma_lo, t):
    t = np.asarray(t, dtype=float)
    return t / (t + gamma_lo) - t / (t + gamma_hi)


def intermediate_gap(gamma_hi, gamma_lo, t, delta=None):
    """Width of the gap between two bulks with inner edges ``gamma_lo < gamma_hi``.

    ``gamma_hi`` is the lower edge of the high-variance bulk and ``gamma_lo``
    the upper edge of the low-variance bulk. The width peaks at
    ``t_max = sqrt(gamma_hi gamma_lo)``. When ``delta`` is given the report
    carries the asymptotic opening/closing times ``gamma_hi/delta`` and
    ``delta gamma_lo`` together with the exact crossing times of the width
    through ``delta`` (None if the peak stays below it).
    """
    if not 0 < gamma_lo < gamma_hi:
        raise ValueError(f"need 0 < gamma_lo < gamma_hi, got {gamma_lo}, {gamma_hi}")
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    width = float(intermediate_gap_width(gamma_hi, gamma_lo, t))
    t_max = float(np.sqrt(gamma_hi * gamma_lo))
    if delta is None:
        return GapReport(width, INTERMEDIATE, float(t), t_max=t_max)
    t_open, t_close = gap_crossing_times(gamma_hi, gamma_lo, delta)
    return GapReport(width, INTERMEDIATE, float(t), delta=delta, t_max=t_max,
                     t_in=gamma_hi / delta, t_fin=delta * gamma_lo,
                     t_open=t_open, t_close=t_close)


def gap_crossing_times(gamma_hi, gamma_lo, delta):
    """Times (opening, closing) where the intermediate width equals ``delta``.

    The width equals ``delta`` where
    ``delta t^2 + [delta (a + b) - (b - a)] t + delta a b = 0`` with
    ``a = gamma_lo`` and ``b = gamma_hi``. Returns ``(None, None)`` when the
    peak width is below ``delta``.
    """
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    a, b = gamma_lo, gamma_hi
    p = delta * (a + b) - (b - a)
    disc = p * p - 4 * delta * delta * a * b
    if disc < 0:
        return None, None
    root = np.sqrt(disc)
    lo = (-p - root) / (2 * delta)
    hi = (-p + root) / (2 * delta)
    # the width exceeds delta between the roots; the larger time opens it
    return float(max(lo, hi)), float(min(lo, hi))


def grid_argmax_time(gamma_hi, gamma_lo, grid):
    """Peak time of the intermediate width located on a log-spaced ``grid``.

    The discrete argmax is refined by fitting a parabola in ``log t`` through
    it and its two neighbours; at the grid ends the grid point is returned.
    """
    grid = np.asarray(grid, dtype=float)
    w = intermediate_gap_width(gamma_hi, gamma_lo, grid)
    k = int(np.argmax(w))
    if k == 0 or k == grid.size - 1:
        return float(grid[k])
    u = np.log(grid[k - 1:k + 2])
    a, b, _ = np.polyfit(u, w[k - 1:k + 2], 2)
    return float(np.exp(-b / (2 * a)))
