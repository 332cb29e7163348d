"""DTMamba: twin selective-SSM blocks for long-horizon time-series forecasting."""

from .config import DTMambaConfig, TrainConfig
from .model import DTMamba, ablate, build_model, forward_variant, param_count
from .tensor import Tensor, no_grad

__all__ = ["DTMamba", "DTMambaConfig", "TrainConfig", "Tensor", "ablate", "build_model",
           "forward_variant", "no_grad", "param_count"]
__version__ = "0.1.0"
