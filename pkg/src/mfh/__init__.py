"""Frequency-domain feature pipeline for handwritten mathematical expression images."""

from .errors import DimensionError, FormatError, MfhError, NumericError, ParameterError
from .freq_transform import (
    COEFF,
    SPATIAL,
    DctPlan,
    FreqImage,
    MaskSpec,
    dct2,
    dct2_naive,
    idct2,
    preprocess,
    retain_high_freq,
)

__version__ = "0.1.0"
