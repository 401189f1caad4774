"""
Robust M-estimation of scatter matrices in large dimensions.

See changelog in robustscatter/__about__.py
"""

# For exporting
from robustscatter.__about__ import __version__
from robustscatter.datagen import generate_samples, generate_snapshots
from robustscatter.doa import estimate_angles, gmusic_spectrum, robust_gmusic_spectrum
from robustscatter.estimator import robust_fixed_point, sample_covariance, scaled_estimate
from robustscatter.harness import emit_report, load_config, run_experiment
from robustscatter.weights import CallableWeight, HuberWeight, StudentTWeight, WeightFunction

__all__ = [
    "__version__",
    "CallableWeight",
    "HuberWeight",
    "StudentTWeight",
    "WeightFunction",
    "emit_report",
    "estimate_angles",
    "generate_samples",
    "generate_snapshots",
    "gmusic_spectrum",
    "load_config",
    "robust_fixed_point",
    "robust_gmusic_spectrum",
    "run_experiment",
    "sample_covariance",
    "scaled_estimate",
]
