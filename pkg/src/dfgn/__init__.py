"""Dynamic feature generation network for answer sentence selection.

Core library (tensor autodiff, attention feature generation, gated encoding,
dynamic-threshold co-attention, compare-aggregate scoring, listwise
training), plus a FastAPI service and a thin CLI client on top.
"""

__version__ = "0.1.0"

from .autodiff import Tape, Tensor
from .config import RunConfig

__all__ = ["Tape", "Tensor", "RunConfig", "__version__"]
