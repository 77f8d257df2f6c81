"""Spectral gaps of diffusion score Jacobians on linear Gaussian manifolds."""

from .dimension import (
    DimensionEstimate,
    LocalDimensionEstimator,
    SVEstimate,
    detect_dimension,
    dimension_vs_time_sweep,
    estimate_singular_values,
)
from .empirical import (
    CondensationReport,
    EmpiricalScore,
    condensation_time,
    memorized_jacobian_sample,
    participation,
    smoothed_jacobian,
    zeta,
)
from .exact_score import ExactScore, GapReport, final_gap, intermediate_gap
from .manifold_data import (
    Dataset,
    LinearManifoldModel,
    VarianceProfile,
    sample_dataset,
    sample_projection,
)
from .rmt import (
    SpectralDensity,
    cumulative_dimension_curve,
    mixture_approx_edges,
    mp_density_wt,
    solve_two_variance_stieltjes,
    two_variance_density_wt,
)
from .sde import TrajectoryRecord, forward_sample, reverse_sample
from .spectrum import SpectrumResult

__version__ = "0.1.0"
