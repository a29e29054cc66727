"""Multiclass calibration through binary reductions.

Histogram-binning calibrators for top-label, class-wise, confidence and top-K
notions, matching calibration metrics with exact oracles on finite
distributions, distribution-free bound calculators, simplex binning for
canonical calibration and a temperature-scaling baseline.
"""
from .binning import HistogramBinning, IdentityCalibrator
from .bounds import theorem1_bounds, theorem2_bounds
from .canonical import (
    CanonicalBinning,
    default_directions,
    fit_projection_hb,
    grid_assign,
    grid_assign_many,
    grid_index_set,
    sierpinski_assign,
    sierpinski_bin_count,
    sierpinski_bins,
)
from .core import (
    Dataset,
    TopKDecomposition,
    TopLabelDecomposition,
    softmax_rows,
    top_k,
    top_label,
    validate_and_normalize,
)
from .exceptions import CalibrationError, SparseClassWarning
from .io import load_model, read_dataset, save_model
from .metrics import (
    conf_ece,
    conf_mce,
    cw_ece,
    exact_metrics,
    reliability_diagram,
    tl_ece,
    tl_mce,
    validity_curve,
)
from .synthetic import (
    DiscreteDistribution,
    coverage_experiment,
    example1_distribution,
    random_distribution,
    sample,
)
from .temperature import TemperatureScaling, apply_temperature
from .wrappers import (
    ClassWiseCalibrator,
    ConfidenceCalibrator,
    M2BNotion,
    NormalizedCalibrator,
    TopKConfidenceCalibrator,
    TopKLabelCalibrator,
    TopLabelCalibrator,
    fit_m2b,
    make_m2b,
)

__version__ = "0.1.0"
