"""Sparse nonparametric encoding and decoding models for image-evoked voxel responses.

Modules
-------
stimuli     synthetic image stimuli (pink noise, gratings, points, apertures)
gabor       Gabor wavelet bank and contrast-energy features
smoothing   penalized natural cubic spline smoothers and LOESS
sparse_fit  screening, Lasso, SPAM backfitting, BIC paths
encoding    per-voxel models, prediction, diagnostics, synthetic voxels
decoding    image identification and exact error rates
tuning      receptive-field, grating and contrast probes
bold        BOLD simulation and amplitude extraction
cli         command-line harness
"""
from .errors import BundleError, InvalidArgument, InvalidConfig, InvalidState, SingularDesign

__version__ = "0.1.0"

__all__ = ["BundleError", "InvalidArgument", "InvalidConfig", "InvalidState", "SingularDesign",
           "__version__"]
