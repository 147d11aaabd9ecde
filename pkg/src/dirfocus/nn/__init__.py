"""Dense float64 autodiff, layers, Adam and a finite-difference oracle."""

from . import functional
from .checkpoint import load_checkpoint, load_state_dict, save_checkpoint, state_dict
from .gradcheck import GradCheckResult, gradcheck
from .layers import BatchNorm, Conv, Linear, Module, Parameter, kaiming_uniform
from .optim import Adam, EarlyStopping, ReduceOnPlateau, TrainConfig
from .tensor import Tensor, as_tensor, set_debug
