"""Small numpy neural-network core: layers, Adam, gradient checks, weight files."""

from .functional import (CANONICAL_SELU, LITERAL_SELU, SeluParams, conv1d_backward, conv1d_forward,
                         conv1d_out_length, dense_backward, dense_forward, global_average_pool,
                         global_average_pool_backward, selu, selu_grad, softmax, softmax_cross_entropy,
                         tanh, tanh_grad)
from .gradcheck import grad_check, relative_error
from .io import read_weights, write_weights
from .layers import Conv1d, Dense, Flatten, GlobalAvgPool, Layer, Selu, Sequential, Tanh
from .optim import AdamState, adam_step
