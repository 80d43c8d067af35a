"""Posterior estimation and MAP classification with f-divergence discriminators."""

from fdivclass.divergences import NAMES, DivergenceSpec, DomainError, get_spec

__all__ = ["NAMES", "DivergenceSpec", "DomainError", "get_spec"]
__version__ = "0.1.0"
