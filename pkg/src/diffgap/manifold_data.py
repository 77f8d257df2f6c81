"""Linear and ellipsoidal Gaussian manifold data.

Conventions: the projection ``F`` has shape (d, m) and column ``k`` has
i.i.d. entries of variance ``sigma_k^2 / m``. Data points are ``y = F z`` with
``z ~ N(0, I_m)``, so the data covariance is ``F F^T`` and for a single
variance the nonzero eigenvalues of ``F F^T`` fill
``sigma^2 (1 +- 1/sqrt(alpha_m))^2`` with ``alpha_m = m / d``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._rng import stream

LINEAR = "linear"
ELLIPSOID = "ellipsoid"
_GEOMETRIES = (LINEAR, ELLIPSOID)


@dataclass(frozen=True)
class VarianceProfile:
    """Variances assigned to the latent columns of the projection.

    Use the constructors :meth:`single`, :meth:`two_block` and
    :meth:`per_dimension` rather than building instances directly.
    """

    kind: str
    values: tuple
    f: float | None = None

    @classmethod
    def single(cls, sigma2):
        return cls._checked("single", (float(sigma2),))

    @classmethod
    def two_block(cls, sigma1_sq, sigma2_sq, f):
        f = float(f)
        if not 0.0 < f < 1.0:
            raise ValueError(f"fraction f must lie in (0, 1), got {f}")
        return cls._checked("two_block", (float(sigma1_sq), float(sigma2_sq)), f)

    @classmethod
    def per_dimension(cls, variances):
        return cls._checked("per_dimension", tuple(float(v) for v in variances))

    @classmethod
    def _checked(cls, kind, values, f=None):
        vals = np.asarray(values, dtype=float)
        if vals.size == 0 or not np.all(np.isfinite(vals)):
            raise ValueError("variances must be finite and non-empty")
        if np.any(vals < 0):
            raise ValueError("variances must be non-negative")
        if not np.any(vals > 0):
            raise ValueError("at least one variance must be positive")
        return cls(kind, tuple(values), f)

    @classmethod
    def parse(cls, text):
        """Parse ``single:1.0``, ``two-block:1.0,0.01,0.25`` or ``per-dim:a,b,...``."""
        kind, _, rest = text.partition(":")
        nums = [float(v) for v in rest.split(",") if v.strip()]
        kind = kind.strip().lower().replace("_", "-")
        if kind == "single" and len(nums) == 1:
            return cls.single(nums[0])
        if kind == "two-block" and len(nums) == 3:
            return cls.two_block(*nums)
        if kind in ("per-dim", "per-dimension") and nums:
            return cls.per_dimension(nums)
        raise ValueError(f"cannot parse variance profile {text!r}")

    def block_sizes(self, m):
        """Column counts ``(n1, n2)`` of a two-block profile for latent size ``m``."""
        if self.kind != "two_block":
            raise ValueError("block sizes are defined for two-block profiles only")
        n1 = int(round(self.f * m))  # round half to even
        if not 1 <= n1 <= m - 1:
            raise ValueError(f"f={self.f} with m={m} leaves an empty block")
        return n1, m - n1

    def column_variances(self, m):
        """Variance of each of the ``m`` latent columns."""
        if self.kind == "single":
            return np.full(m, self.values[0])
        if self.kind == "two_block":
            n1, n2 = self.block_sizes(m)
            return np.concatenate([np.full(n1, self.values[0]), np.full(n2, self.values[1])])
        if len(self.values) != m:
            raise ValueError(f"profile lists {len(self.values)} variances but m={m}")
        return np.asarray(self.values, dtype=float)

    def to_dict(self):
        out = {"kind": self.kind, "values": list(self.values)}
        if self.f is not None:
            out["f"] = self.f
        return out

    @classmethod
    def from_dict(cls, doc):
        if doc["kind"] == "single":
            return cls.single(doc["values"][0])
        if doc["kind"] == "two_block":
            return cls.two_block(doc["values"][0], doc["values"][1], doc["f"])
        return cls.per_dimension(doc["values"])


@dataclass(frozen=True, eq=False)
class LinearManifoldModel:
    """Projection matrix with the eigen-decomposition of ``F F^T``.

    Attributes
    ----------
    gammas : ndarray (d,)
        Eigenvalues of ``F F^T`` in decreasing order. The trailing ``d - m``
        entries are exactly zero.
    eigvecs : ndarray (d, d)
        Orthonormal eigenvectors, column ``j`` paired with ``gammas[j]``.
    """

    F: np.ndarray
    profile: VarianceProfile
    seed: int | None
    gammas: np.ndarray = field(repr=False)
    eigvecs: np.ndarray = field(repr=False)

    @classmethod
    def from_matrix(cls, F, profile=None, seed=None):
        F = np.array(F, dtype=float, copy=True)
        if F.ndim != 2 or F.shape[1] > F.shape[0] or F.size == 0:
            raise ValueError(f"F must be d x m with 1 <= m <= d, got shape {F.shape}")
        d, m = F.shape
        # SVD of F gives exact zeros for the d - m orthogonal directions
        U, s, _ = np.linalg.svd(F, full_matrices=True)
        gammas = np.zeros(d)
        gammas[:m] = s**2
        for arr in (F, gammas, U):
            arr.setflags(write=False)
        return cls(F, profile, seed, gammas, U)

    @property
    def d(self):
        return self.F.shape[0]

    @property
    def m(self):
        return self.F.shape[1]

    @property
    def alpha_m(self):
        return self.m / self.d

    def covariance(self):
        return self.F @ self.F.T

    def tangent_basis(self, rtol=1e-8):
        """Orthonormal basis of the column space of ``F``."""
        keep = self.gammas > rtol * self.gammas[0]
        return self.eigvecs[:, keep]

    def projector(self, rtol=1e-8):
        Q = self.tangent_basis(rtol)
        return Q @ Q.T

    def to_dict(self, include_matrix=True):
        doc = {
            "d": self.d,
            "m": self.m,
            "alpha_m": self.alpha_m,
            "seed": self.seed,
            "profile": None if self.profile is None else self.profile.to_dict(),
        }
        if include_matrix:
            doc["F"] = self.F.tolist()
        return doc

    def to_json(self, include_matrix=True):
        return json.dumps(self.to_dict(include_matrix))

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        profile = None if doc.get("profile") is None else VarianceProfile.from_dict(doc["profile"])
        if "F" in doc:
            return cls.from_matrix(np.asarray(doc["F"], dtype=float), profile, doc.get("seed"))
        return sample_projection(doc["d"], doc["m"], profile, doc["seed"])


@dataclass(frozen=True, eq=False)
class Dataset:
    points: np.ndarray
    geometry: str
    latents: np.ndarray = field(repr=False)

    @property
    def N(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def to_dict(self):
        return {"N": self.N, "d": self.d, "geometry": self.geometry,
                "points": self.points.tolist()}


def _check_dims(d, m):
    if int(d) != d or int(m) != m:
        raise ValueError("dimensions must be integers")
    if d < 1 or m < 1:
        raise ValueError(f"dimensions must be positive, got d={d}, m={m}")
    if m > d:
        raise ValueError(f"latent dimension m={m} exceeds ambient dimension d={d}")


def sample_projection(d, m, profile, seed):
    """Draw ``F`` with column ``k`` entries ``N(0, sigma_k^2 / m)``."""
    _check_dims(d, m)
    variances = profile.column_variances(m)
    rng = stream(seed, 0)
    F = rng.standard_normal((d, m)) * np.sqrt(variances / m)
    return LinearManifoldModel.from_matrix(F, profile, seed)


def sample_dataset(model, N, geometry=LINEAR, seed=0):
    """Draw ``N`` points ``y = F z``; for the ellipsoid ``z`` is unit-normalized."""
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    if geometry not in _GEOMETRIES:
        raise ValueError(f"geometry must be one of {_GEOMETRIES}, got {geometry!r}")
    rng = stream(seed, 1)
    z = rng.standard_normal((int(N), model.m))
    if geometry == ELLIPSOID:
        z /= np.linalg.norm(z, axis=1, keepdims=True)
    return Dataset(z @ model.F.T, geometry, z)
