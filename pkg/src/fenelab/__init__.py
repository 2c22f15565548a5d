"""FENE dumbbell Fokker-Planck solver and verification lab."""

from fenelab.weights import KappaMatrix, ModelParams, WeightRegime, regime

__all__ = ["KappaMatrix", "ModelParams", "WeightRegime", "regime"]
__version__ = "0.1.0"
