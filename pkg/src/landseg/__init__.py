"""Semi-supervised land-cover segmentation of multi-band rasters.

Pipeline: per-pixel multi-feature extraction (cell patches, uniform LBP
histograms, GLCM statistics) -> optional PCA -> exact 3-D t-SNE -> CCA
trained on a small labeled subset (RBF / linear / polynomial first view
against one-hot labels) -> row-normalized canonical variables -> k-means
-> Kuhn-Munkres-aligned evaluation.
"""

from .errors import ConfigError, DataError, LandsegError, NumericError

__all__ = ["ConfigError", "DataError", "LandsegError", "NumericError"]
__version__ = "0.1.0"
