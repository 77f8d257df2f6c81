"""Large-dimension spectral densities of ``F F^T`` and of ``W_t``.

Densities are first built for the eigenvalues ``gamma`` of ``F F^T`` (per
ambient dimension, so the bulk carries mass ``alpha_m`` and an atom of mass
``1 - alpha_m`` sits at zero) and then pushed through
``r = -t / (t + gamma)`` to the spectrum of ``W_t``.

For two latent variances the Stieltjes transform ``g(z) = E[1/(z - gamma)]``
is a root of the cubic

    z q^3 + q^2 (a - 1 - z a/s1 - z a/s2)
          + q (a^2/(s1 s2) (z - f s1 - (1 - f) s2) + a/s1 + a/s2)
          - a^2/(s1 s2) = 0

with ``a = alpha_m``, ``s1, s2`` the variances and ``f`` the fraction of
columns at ``s1``. The density is ``Im g(gamma - i0) / pi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate

from .exact_score import gamma_from_r, mp_edges, r_transform

GAMMA = "gamma"
R = "r"

_TABLE_POINTS = 4097


def _component_quad(fun, a, b):
    # x = a + (b - a)(1 - cos th)/2 removes inverse-square-root edge behaviour
    half = 0.5 * (b - a)

    def g(th):
        return float(fun(np.array([a + half * (1.0 - np.cos(th))]))[0]) * half * np.sin(th)

    val, _ = integrate.quad(g, 0.0, np.pi, epsabs=1e-13, epsrel=1e-11, limit=400)
    return val


@dataclass(frozen=True, eq=False)
class SpectralDensity:
    """Absolutely continuous bulk plus point masses on the real line.

    ``variable`` is ``"gamma"`` (eigenvalues of ``F F^T``) or ``"r"``
    (eigenvalues of ``W_t``). ``pdf`` evaluates the bulk density on an array
    and must vanish outside ``support``.
    """

    variable: str
    support: tuple
    atoms: tuple
    pdf: Callable = field(repr=False)
    t: float | None = None
    samples: tuple | None = field(default=None, repr=False)

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        for a, b in self.support:
            inside = (x > a) & (x < b)
            if np.any(inside):
                out[inside] = self.pdf(x[inside])
        return out

    def component_masses(self):
        return [_component_quad(self.pdf, a, b) for a, b in self.support]

    def bulk_mass(self):
        return float(sum(self.component_masses()))

    def atom_mass(self):
        return float(sum(w for _, w in self.atoms))

    def total_mass(self):
        return self.bulk_mass() + self.atom_mass()

    def moment(self, k=1):
        val = sum(_component_quad(lambda x: x**k * self.pdf(x), a, b) for a, b in self.support)
        return float(val + sum(w * loc**k for loc, w in self.atoms))

    @cached_property
    def _tables(self):
        th = np.linspace(0.0, np.pi, _TABLE_POINTS)
        tables = []
        for a, b in self.support:
            half = 0.5 * (b - a)
            x = a + half * (1.0 - np.cos(th))
            vals = np.zeros_like(x)
            vals[1:-1] = self.pdf(x[1:-1])
            cum = integrate.cumulative_simpson(vals * half * np.sin(th), x=th, initial=0.0)
            tables.append((x, np.maximum.accumulate(cum)))
        return tables

    def _pieces(self):
        pieces = [(loc, "atom", w) for loc, w in self.atoms]
        pieces += [(a, "bulk", tab) for (a, _), tab in zip(self.support, self._tables)]
        return sorted(pieces, key=lambda p: p[0])

    def cdf(self, x):
        """Right-continuous cumulative distribution."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for loc, w in self.atoms:
            out += w * (x >= loc)
        for xs, cum in self._tables:
            out += np.interp(x, xs, cum, left=0.0, right=cum[-1])
        return out

    def cdf_left(self, x):
        """Left limit of the cumulative distribution."""
        x = np.asarray(x, dtype=float)
        out = self.cdf(x)
        for loc, w in self.atoms:
            out -= w * (x == loc)
        return out

    def ppf(self, levels):
        """Quantile function; levels falling on an atom return its location."""
        levels = np.asarray(levels, dtype=float)
        out = np.full(levels.shape, np.nan)
        start = 0.0
        last = None
        for loc, kind, payload in self._pieces():
            if kind == "atom":
                mass = payload
                hit = (levels >= start) & (levels < start + mass) & np.isnan(out)
                out[hit] = loc
                last = loc
            else:
                xs, cum = payload
                mass = cum[-1]
                hit = (levels >= start) & (levels < start + mass) & np.isnan(out)
                out[hit] = np.interp(levels[hit] - start, cum, xs)
                last = xs[-1]
            start += mass
        out[np.isnan(out)] = last
        return out

    def sampled(self, n=512):
        """Density sampled on each bulk component (edge-clustered grid)."""
        th = np.linspace(0.0, np.pi, n)
        out = []
        for a, b in self.support:
            x = a + 0.5 * (b - a) * (1.0 - np.cos(th))
            out.append((x, self(x)))
        return out

    def to_dict(self):
        return {
            "variable": self.variable,
            "t": self.t,
            "support": [list(map(float, s)) for s in self.support],
            "atoms": [[float(loc), float(w)] for loc, w in self.atoms],
            "bulk_mass": self.bulk_mass(),
            "total_mass": self.total_mass(),
        }


def _check_alpha(alpha_m):
    if not 0 < alpha_m <= 1:
        raise ValueError(f"alpha_m must lie in (0, 1], got {alpha_m}")


def _check_t(t):
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")


def _zero_atom(alpha_m):
    w = 1.0 - alpha_m
    return ((0.0, w),) if w > 0 else ()


# ---------------------------------------------------------------- single variance


def mp_gamma_pdf(gamma, sigma2, alpha_m):
    """Bulk density of the eigenvalues of ``F F^T`` (bulk mass ``alpha_m``)."""
    gamma = np.asarray(gamma, dtype=float)
    lo, hi = mp_edges(sigma2, alpha_m)
    out = np.zeros_like(gamma)
    inside = (gamma > lo) & (gamma < hi)
    g = gamma[inside]
    out[inside] = alpha_m / sigma2 * np.sqrt((hi - g) * (g - lo)) / (2 * np.pi * g)
    return out


def single_variance_gamma_density(sigma2, alpha_m):
    _check_alpha(alpha_m)
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    lo, hi = mp_edges(sigma2, alpha_m)
    return SpectralDensity(GAMMA, ((lo, hi),), _zero_atom(alpha_m),
                           lambda g: mp_gamma_pdf(g, sigma2, alpha_m))


def mp_density_wt(sigma2, alpha_m, t, r):
    """Bulk density of ``W_t`` eigenvalues at ``r`` for a single variance.

    On ``[r_lo, r_hi] = [-t/(t + gamma_lo), -t/(t + gamma_hi)]``

        rho(r) = alpha_m t sqrt((r_hi - r)(r - r_lo))
                 / (2 pi sigma^2 sqrt(r_lo r_hi) r^2 (1 + r)),

    which integrates to ``alpha_m``; the atom ``(1 - alpha_m) delta(r + 1)``
    is not included.
    """
    _check_alpha(alpha_m)
    _check_t(t)
    r = np.asarray(r, dtype=float)
    if np.any((r < -1) | (r > 0)):
        raise ValueError("r must lie in [-1, 0]")
    g_lo, g_hi = mp_edges(sigma2, alpha_m)
    r_lo, r_hi = r_transform(g_lo, t), r_transform(g_hi, t)
    out = np.zeros_like(r)
    inside = (r > r_lo) & (r < r_hi)
    x = r[inside]
    out[inside] = (alpha_m * t * np.sqrt((r_hi - x) * (x - r_lo))
                   / (2 * np.pi * sigma2 * np.sqrt(r_lo * r_hi) * x**2 * (1 + x)))
    return out


def single_variance_density_wt(sigma2, alpha_m, t):
    _check_alpha(alpha_m)
    _check_t(t)
    g_lo, g_hi = mp_edges(sigma2, alpha_m)
    support = ((float(r_transform(g_lo, t)), float(r_transform(g_hi, t))),)
    atoms = ((-1.0, 1.0 - alpha_m),) if alpha_m < 1 else ()
    return SpectralDensity(R, support, atoms, lambda r: mp_density_wt(sigma2, alpha_m, t, r), t=t)


def push_to_r(density, t):
    """Push a ``gamma`` density through ``r = -t/(t + gamma)``."""
    if density.variable != GAMMA:
        raise ValueError("expected a density over gamma")
    _check_t(t)
    support = tuple((float(r_transform(a, t)), float(r_transform(b, t))) for a, b in density.support)
    atoms = tuple((float(r_transform(loc, t)), w) for loc, w in density.atoms)

    def pdf(r):
        r = np.asarray(r, dtype=float)
        return density.pdf(gamma_from_r(r, t)) * t / r**2

    return SpectralDensity(R, support, atoms, pdf, t=t)


# ---------------------------------------------------------------- two variances


@dataclass(frozen=True)
class StieltjesSolution:
    z: complex
    q_star: complex
    g: complex


def _check_two(s1, s2, f, alpha_m):
    if not (s1 > 0 and s2 > 0):
        raise ValueError("both variances must be positive")
    if not 0 < f < 1:
        raise ValueError(f"f must lie in (0, 1), got {f}")
    _check_alpha(alpha_m)


def cubic_coefficients(z, s1, s2, f, alpha_m):
    """Coefficients (c3, c2, c1, c0) of the saddle-point cubic, broadcast over ``z``."""
    a = alpha_m
    z = np.asarray(z)
    k = a * a / (s1 * s2)
    c3 = z
    c2 = a - 1.0 - z * a / s1 - z * a / s2
    c1 = k * (z - f * s1 - (1.0 - f) * s2) + a / s1 + a / s2
    c0 = np.full_like(z, -k) if np.ndim(z) else -k
    return c3, c2, c1, c0


def _cubic_roots(z, s1, s2, f, alpha_m):
    """All three roots for each ``z`` (companion eigenvalues, Newton-polished)."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    c3, c2, c1, c0 = cubic_coefficients(z, s1, s2, f, alpha_m)
    comp = np.zeros(z.shape + (3, 3), dtype=complex)
    comp[..., 0, 0] = -c2 / c3
    comp[..., 0, 1] = -c1 / c3
    comp[..., 0, 2] = -c0 / c3
    comp[..., 1, 0] = 1.0
    comp[..., 2, 1] = 1.0
    q = np.linalg.eigvals(comp)
    C3, C2, C1, C0 = (c[..., None] for c in (c3, c2, c1, c0))
    for _ in range(3):
        p = ((C3 * q + C2) * q + C1) * q + C0
        dp = (3 * C3 * q + 2 * C2) * q + C1
        step = np.where(dp != 0, p / np.where(dp != 0, dp, 1), 0)
        q = q - step
    return q


def discriminant_polynomial(s1, s2, f, alpha_m):
    """Cubic discriminant as a polynomial in ``z``; negative inside the bulk."""
    a = alpha_m
    k = a * a / (s1 * s2)
    A = Polynomial([0.0, 1.0])
    B = Polynomial([a - 1.0, -a / s1 - a / s2])
    C = Polynomial([-k * (f * s1 + (1 - f) * s2) + a / s1 + a / s2, k])
    D = Polynomial([-k])
    return 18 * A * B * C * D - 4 * B**3 * D + B**2 * C**2 - 4 * A * C**3 - 27 * A**2 * D**2


def two_variance_support(s1, s2, f, alpha_m):
    """Bulk intervals of the ``gamma`` density, from the discriminant's real roots."""
    _check_two(s1, s2, f, alpha_m)
    P = discriminant_polynomial(s1, s2, f, alpha_m)
    roots = P.roots()
    scale = max(s1, s2) * (1 + 1 / np.sqrt(alpha_m)) ** 2
    real = np.sort(roots[np.abs(roots.imag) <= 1e-7 * scale].real)
    dP = P.deriv()
    for _ in range(4):
        d = dP(real)
        real = real - np.where(d != 0, P(real) / np.where(d != 0, d, 1), 0)
    real = np.unique(real[real > 0])
    cuts = np.concatenate([[0.0], real, [real[-1] * 2 + scale if real.size else scale]])
    intervals = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a <= 1e-14 * scale:
            continue
        mid = 0.5 * (a + b)
        if P(mid) < 0 and b < cuts[-1]:
            if intervals and abs(intervals[-1][1] - a) <= 1e-12 * scale:
                intervals[-1] = (intervals[-1][0], float(b))
            else:
                intervals.append((float(a), float(b)))
    return tuple(intervals)


def two_variance_gamma_pdf(gamma, s1, s2, f, alpha_m):
    """``Im g(gamma - i0) / pi`` evaluated exactly on the real axis."""
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    out = np.zeros_like(gamma)
    ok = gamma > 0
    if not np.any(ok):
        return out
    q = _cubic_roots(gamma[ok], s1, s2, f, alpha_m)
    im = q.imag.max(axis=-1)
    disc = discriminant_polynomial(s1, s2, f, alpha_m)(gamma[ok])
    out[ok] = np.where(disc < 0, np.maximum(im, 0.0), 0.0) / np.pi
    return out


def solve_two_variance_stieltjes(s1, s2, f, alpha_m, z, steps=80):
    """Stieltjes transform at complex ``z`` by continuation from far below the axis.

    The branch starts at ``g ~ 1/z`` for large ``|Im z|`` and is followed
    root by root down to the requested point. For ``Im z > 0`` the result is
    the conjugate of the value at ``conj(z)``.
    """
    _check_two(s1, s2, f, alpha_m)
    z = complex(z)
    if z.imag == 0:
        raise ValueError("z must have a nonzero imaginary part")
    flip = z.imag > 0
    zz = z.conjugate() if flip else z
    scale = max(s1, s2) * (1 + 1 / np.sqrt(alpha_m)) ** 2
    far = 1e3 * scale + abs(zz)
    path = zz.real + 1j * -np.geomspace(far, -zz.imag, steps)
    q = 1.0 / path[0]
    for zk in path:
        roots = _cubic_roots(zk, s1, s2, f, alpha_m)[0]
        q = roots[np.argmin(np.abs(roots - q))]
    if q.imag < 0:
        raise ValueError(f"no root on the density branch at z={z}")
    if flip:
        q = q.conjugate()
    return StieltjesSolution(z, complex(q), complex(q))


def stieltjes_density(gamma, s1, s2, f, alpha_m, eps=1e-6):
    """Density from ``Im g(gamma - i eps)/pi`` with Richardson extrapolation over (10 eps, eps)."""
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    vals = []
    for e in (10 * eps, eps):
        vals.append(np.array([solve_two_variance_stieltjes(s1, s2, f, alpha_m, g - 1j * e).g.imag
                              for g in gamma]) / np.pi)
    return (10 * vals[1] - vals[0]) / 9


def two_variance_gamma_density(s1, s2, f, alpha_m):
    _check_two(s1, s2, f, alpha_m)
    support = two_variance_support(s1, s2, f, alpha_m)
    return SpectralDensity(GAMMA, support, _zero_atom(alpha_m),
                           lambda g: two_variance_gamma_pdf(g, s1, s2, f, alpha_m))


def two_variance_density_wt(s1, s2, f, alpha_m, t, grid=None):
    """Density of ``W_t`` eigenvalues for two latent variances.

    If ``grid`` is given (values in (-1, 0)) the density sampled on it is
    attached as ``samples``.
    """
    _check_t(t)
    dens = push_to_r(two_variance_gamma_density(s1, s2, f, alpha_m), t)
    if grid is None:
        return dens
    grid = np.asarray(grid, dtype=float)
    if np.any((grid <= -1) | (grid >= 0)):
        raise ValueError("grid must lie strictly inside (-1, 0)")
    return SpectralDensity(dens.variable, dens.support, dens.atoms, dens.pdf, t, (grid, dens(grid)))


def mixture_approx_edges(s1, s2, f, alpha_m):
    """Inner edges ``(gamma_plus(s1), gamma_minus(s2))`` treating the bulks as separate MP laws."""
    if not (f * alpha_m > 0 and (1 - f) * alpha_m > 0):
        raise ValueError("need f * alpha_m > 0 and (1 - f) * alpha_m > 0")
    g_plus = f * s1 * (1 - np.sqrt(1 / (f * alpha_m))) ** 2
    g_minus = (1 - f) * s2 * (1 + np.sqrt(1 / ((1 - f) * alpha_m))) ** 2
    return float(g_plus), float(g_minus)


def exact_inner_edges(s1, s2, f, alpha_m):
    """Inner edges of the exact two-variance density, or None for a single bulk."""
    support = two_variance_support(s1, s2, f, alpha_m)
    if len(support) < 2:
        return None
    return support[-1][0], support[-2][1]


# ---------------------------------------------------------------- utilities


def cumulative_dimension_curve(density, d):
    """Expected sorted ``|r|`` values: the quantile function at ``(j - 1/2)/d``."""
    if density.variable != R:
        raise ValueError("expected a density over r")
    levels = (np.arange(1, d + 1) - 0.5) / d
    return np.abs(density.ppf(levels))


def ks_distance(samples, density):
    """Kolmogorov-Smirnov distance between samples and a density with atoms."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    i = np.arange(1, n + 1)
    right = density.cdf(x)
    left = density.cdf_left(x)
    return float(max(np.max(i / n - right), np.max(left - (i - 1) / n)))


def sample_w_eigenvalues(d, m, profile, times, realizations, seed):
    """Pooled finite-``d`` ``W_t`` eigenvalues, one array per time."""
    from .manifold_data import sample_projection

    pooled = {float(t): [] for t in times}
    for k in range(realizations):
        model = sample_projection(d, m, profile, (seed, k))
        for t in pooled:
            pooled[t].append(r_transform(model.gammas, t))
    return {t: np.concatenate(v) for t, v in pooled.items()}
