"""LMI-based synthesis and certification of rational state-feedback
controllers for discrete-time bilinear systems."""

from . import analysis, controller, lfr, matrixcore, model, sdp_backend, synthesis

__all__ = [
    "analysis",
    "controller",
    "lfr",
    "matrixcore",
    "model",
    "sdp_backend",
    "synthesis",
]

__version__ = "0.1.0"
