from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    """Ordered spectrum with a note on where it came from.

    ``source`` is one of ``"exact"``, ``"finite-matrix"``, ``"analytic"`` or
    ``"score-estimate"``. ``normalization`` says whether the values are the
    dimensionless ``W_t`` eigenvalues (``"W_t"``, in [-1, 0]) or the raw score
    Jacobian eigenvalues (``"W_t/t"``).
    """

    values: np.ndarray
    source: str
    normalization: str = "W_t"
    t: float | None = None

    def __len__(self):
        return len(self.values)

    def magnitudes(self):
        """|values| sorted in decreasing order."""
        return np.sort(np.abs(self.values))[::-1]
