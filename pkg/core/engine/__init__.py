"""
Engine

Minimal dense-array engine with reverse-mode differentiation, the layer set
the models need, Adam and Kaiming initialization.
"""

from core.engine.tensor import DEFAULT_DTYPE, Parameter, Tensor, no_grad
from core.engine.rng import Rng

__all__ = ["DEFAULT_DTYPE", "Parameter", "Rng", "Tensor", "no_grad"]
