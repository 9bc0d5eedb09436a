"""Multicontinuum coarse models and reference solvers for
time-fractional diffusion-wave problems in high-contrast media."""

__version__ = "0.1.0"

from . import caputo, cells, config, fem, fine, grid, macro, media, metrics, upscale

__all__ = [
    "caputo",
    "cells",
    "config",
    "fem",
    "fine",
    "grid",
    "macro",
    "media",
    "metrics",
    "upscale",
    "__version__",
]
