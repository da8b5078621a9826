"""
Minimal differentiable engine for the classifier models.

- kernels: stateless forward/backward math and the loss
- layers: Parameter and the layer set
- graph: ModelGraph, backward(), count_params()
- optim: adam_step, one bias-corrected Adam update
- gradcheck: finite-difference gradient check
- checkpoint: manifest + parameter blob on disk
"""
from src.tensornet.graph import ModelGraph, backward, count_params
from src.tensornet.gradcheck import gradient_check
from src.tensornet.kernels import softmax_cross_entropy
from src.tensornet.optim import adam_step

__all__ = ["ModelGraph", "backward", "count_params", "gradient_check", "softmax_cross_entropy", "adam_step"]
