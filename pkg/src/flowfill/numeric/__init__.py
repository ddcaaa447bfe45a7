from .autodiff import ShapeError, Tape, Tensor
from .rng import Rng

__all__ = ["ShapeError", "Tape", "Tensor", "Rng"]
