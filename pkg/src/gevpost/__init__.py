"""Bayesian GEV inference: posterior normality and evidence bounds."""

from .gev_core import GevParams, Sample, gev_sample

__all__ = ["GevParams", "Sample", "gev_sample"]
__version__ = "0.1.0"
