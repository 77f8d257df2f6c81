"""Local intrinsic dimension from the singular values of a probed score field.

The score is evaluated around a base point ``x0`` along ``d`` orthonormalized
random directions scaled to radius ``sqrt(t0)``. The singular values of the
stacked responses, sorted and divided by the largest, drop sharply between
directions the score contracts (orthogonal to the manifold) and directions
it leaves free (tangent). The drop is located from discrete second
differences compared with their median.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._rng import stream

FORWARD = "forward"
CENTRAL = "central"
_VARIANTS = (FORWARD, CENTRAL)

SECOND_DERIVATIVE = "second-derivative"
NONE_DETECTED = "none-detected"

MEDIAN_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class SVEstimate:
    singular_values: np.ndarray
    raw_values: np.ndarray
    discarded_leading: int
    x0: np.ndarray = field(repr=False)
    t0: float
    orthogonality_residual: float = 0.0

    @property
    def d(self):
        return self.singular_values.size


@dataclass(frozen=True)
class DimensionEstimate:
    """Detected dimension; ``gaps`` lists every drop passing the threshold."""

    dimension: int | None
    gap_index: int | None
    threshold_factor: float
    method: str
    threshold: float
    gaps: tuple = ()

    @property
    def detected(self):
        return self.method == SECOND_DERIVATIVE

    def dimension_or_zero(self):
        return 0 if self.dimension is None else self.dimension


def _probe_directions(d, seed, max_tries=10):
    for attempt in range(max_tries):
        rng = stream(seed, 3, attempt)
        Q, R = np.linalg.qr(rng.standard_normal((d, d)))
        diag = np.abs(np.diag(R))
        if diag.min() > 1e-10 * diag.max():
            return Q
    raise RuntimeError("could not draw a non-degenerate set of probe directions")


def estimate_singular_values(score, x0, t0, variant=FORWARD, seed=0, discard_leading=1):
    """Singular values of the score response to orthogonal probes of radius ``sqrt(t0)``.

    ``forward`` stacks ``s(x0 + p_i) - s(x0)``; ``central`` stacks
    ``(s(x0 + p_i) - s(x0 - p_i)) / 2`` over mirrored probe pairs.
    """
    if variant not in _VARIANTS:
        raise ValueError(f"variant must be one of {_VARIANTS}, got {variant!r}")
    if not t0 > 0:
        raise ValueError(f"t0 must be positive, got {t0}")
    if not 0 <= discard_leading <= 3:
        raise ValueError("discard_leading must be between 0 and 3")
    x0 = np.asarray(x0, dtype=float)
    d = x0.size
    if d < 2:
        raise ValueError("need at least two dimensions")
    Q = _probe_directions(d, seed)
    resid = float(np.max(np.abs(Q.T @ Q - np.eye(d))))
    P = np.sqrt(t0) * Q.T
    if variant == FORWARD:
        S = score(x0[None, :] + P, t0) - score(x0, t0)[None, :]
    else:
        S = 0.5 * (score(x0[None, :] + P, t0) - score(x0[None, :] - P, t0))
    raw = np.linalg.svd(S.T, compute_uv=False)
    top = raw[0]
    norm = raw / top if top > 0 else np.zeros_like(raw)
    return SVEstimate(norm, raw, int(discard_leading), x0, float(t0), resid)


def second_differences(values):
    """``D[i] = v[i-1] - 2 v[i] + v[i+1]`` for ``i = 1 .. len(v) - 2`` (index 0 unused)."""
    v = np.asarray(values, dtype=float)
    D = np.zeros_like(v)
    D[1:-1] = v[:-2] - 2.0 * v[1:-1] + v[2:]
    return D


def detect_dimension(est, threshold_factor=5.0, discard_leading=None):
    """Locate the first sharp drop in the sorted normalized singular values.

    Second differences whose stencil touches a discarded leading value are
    ignored. The threshold is ``threshold_factor`` times the median of the
    remaining ``|D|`` values above ``MEDIAN_FLOOR`` (the floor itself when
    none exceed it). Scanning from the largest values, the first ``i`` with
    ``|D[i]|`` above threshold marks the drop: a concave corner (``D < 0``)
    puts it after ``i``, a convex one before it. ``dimension = d - gap_index``.
    ``gaps`` collects every concave corner that is a local minimum of ``D``.
    """
    if threshold_factor <= 0:
        raise ValueError("threshold_factor must be positive")
    v = np.asarray(est.singular_values if isinstance(est, SVEstimate) else est, dtype=float)
    k = est.discarded_leading if discard_leading is None and isinstance(est, SVEstimate) else (
        1 if discard_leading is None else discard_leading)
    d = v.size
    if d < 4:
        raise ValueError("need at least four singular values")
    D = second_differences(v)
    centers = np.arange(k + 1, d - 1)
    if centers.size == 0:
        raise ValueError("too few values left after discarding")
    mag = np.abs(D[centers])
    big = mag[mag > MEDIAN_FLOOR]
    med = float(np.median(big)) if big.size else MEDIAN_FLOOR
    thr = threshold_factor * med
    flagged = centers[mag > thr]
    if flagged.size == 0:
        return DimensionEstimate(None, None, float(threshold_factor), NONE_DETECTED, thr)
    i = int(flagged[0])
    gap = i + 1 if D[i] < 0 else i
    gaps = []
    for c in flagged:
        if D[c] < 0 and D[c] <= D[c - 1] and D[c] <= D[c + 1]:
            gaps.append(int(c) + 1)
    return DimensionEstimate(d - gap, gap, float(threshold_factor), SECOND_DERIVATIVE, thr, tuple(gaps))


def dimension_vs_time_sweep(score, x0, times, variant=FORWARD, threshold_factor=5.0,
                            repeats=1, seed=0, discard_leading=1):
    """Rows ``(t, mean dimension, standard error)``; undetected counts as 0."""
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    rows = []
    for it, t in enumerate(times):
        if not t > 0:
            raise ValueError(f"times must be positive, got {t}")
        dims = []
        for rep in range(repeats):
            est = estimate_singular_values(score, x0, t, variant, (seed, it, rep), discard_leading)
            dims.append(detect_dimension(est, threshold_factor).dimension_or_zero())
        dims = np.asarray(dims, dtype=float)
        sem = float(dims.std(ddof=1) / np.sqrt(repeats)) if repeats > 1 else 0.0
        rows.append((float(t), float(dims.mean()), sem))
    return rows


class LocalDimensionEstimator(TransformerMixin, BaseEstimator):
    """Estimate local dimension at each row of ``X`` for a fixed score field.

    Parameters
    ----------
    score_field : callable
        ``score_field(x, t)`` accepting (d,) or (n, d) arrays.
    t0 : float
        Probe time; probes have radius ``sqrt(t0)``.
    variant : {"forward", "central"}
    threshold_factor : float
    discard_leading : int
    random_state : int

    ``transform`` returns normalized singular values and ``predict`` the
    detected dimensions (0 where no drop passes the threshold).
    """

    def __init__(self, score_field=None, t0=1e-3, variant=FORWARD, threshold_factor=5.0,
                 discard_leading=1, random_state=0):
        self.score_field = score_field
        self.t0 = t0
        self.variant = variant
        self.threshold_factor = threshold_factor
        self.discard_leading = discard_leading
        self.random_state = random_state

    def _estimate(self, X):
        if self.score_field is None:
            raise ValueError("score_field must be set")
        X = check_array(X, dtype=float)
        ests = [estimate_singular_values(self.score_field, x, self.t0, self.variant,
                                         (self.random_state, i), self.discard_leading)
                for i, x in enumerate(X)]
        dets = [detect_dimension(e, self.threshold_factor) for e in ests]
        return ests, dets

    def fit(self, X, y=None):
        ests, dets = self._estimate(X)
        self.estimates_ = ests
        self.detections_ = dets
        self.singular_values_ = np.vstack([e.singular_values for e in ests])
        self.dimensions_ = np.array([dd.dimension_or_zero() for dd in dets])
        self.n_features_in_ = self.singular_values_.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "singular_values_")
        ests, _ = self._estimate(X)
        return np.vstack([e.singular_values for e in ests])

    def predict(self, X):
        check_is_fitted(self, "singular_values_")
        _, dets = self._estimate(X)
        return np.array([dd.dimension_or_zero() for dd in dets])
