"""Saliency prediction, evaluation and network dissection on numpy."""
from .errors import (ConfigError, DomainError, GazeLabError, NumericError, ParseError,
                     ShapeError, StateError)
from .losses import LossKind, loss_grad, loss_value
from .metrics import auc_judd, cc, nss, sim
from .model import Network, NetworkConfig, backward, build_network, encoder_features, forward
from .tensor import KernelSet

__version__ = "0.1.0"
