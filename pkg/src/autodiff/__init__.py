# Autodiff Module
from .functional import conv2d, glu, instance_norm, pixel_shuffle, silu, space_to_depth
from .module import Conv2d, InstanceNorm, Module, Parameter
from .optimizer import Adam, AdamState, adam_step
from .tensor import DiffTensor, concat, no_grad
