"""
Optimizer Module

Bias-corrected Adam on a list of Parameters.
"""
from typing import Iterable

import numpy as np

from src.tensornet.layers import Parameter


def adam_step(params: Iterable[Parameter], lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """
    One Adam update per parameter; increments each step counter and zeroes
    the grads.
    """
    for p in params:
        p.step += 1
        g = p.grad
        p.m *= beta1
        p.m += (1.0 - beta1) * g
        p.v *= beta2
        p.v += (1.0 - beta2) * g * g
        m_hat = p.m / (1.0 - beta1 ** p.step)
        v_hat = p.v / (1.0 - beta2 ** p.step)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.zero_grad()

