"""
Model Graph Module

A ModelGraph is a static chain of layers with a parameter registry, an input
spec (W frames x D dims) and an output spec (C class logits).
"""
import copy
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import GraphStateError, ShapeError
from src.tensornet.layers import Layer, Parameter, Sequential

_logger = logging.getLogger(__name__)


class ModelGraph:
    """
    Static layer chain mapping [B, W, D] windows to [B, C] logits.

    Args:
        layers: Layers applied in order
        input_shape: (W, D)
        num_classes: C
        name: Model name used in reports
        spec: Serializable description of how the graph was built
    """

    def __init__(self, layers: Sequence[Layer], input_shape: Tuple[int, int], num_classes: int,
                 name: str = "graph", spec: Optional[Dict[str, Any]] = None):
        self.body = Sequential(layers)
        self.input_shape = (int(input_shape[0]), int(input_shape[1]))
        self.num_classes = int(num_classes)
        self.name = name
        self.spec = dict(spec or {})
        self._registry: List[Parameter] = []
        for full_name, param in self.body.named_parameters():
            param.name = full_name
            self._registry.append(param)
        self._ready_for_backward = False

    # ------------------------------------------------------------------
    # Parameters
    # ------------------------------------------------------------------

    def parameters(self) -> List[Parameter]:
        """Registry order: depth-first layer order, then declaration order."""
        return list(self._registry)

    @property
    def parameter_count(self) -> int:
        return sum(p.size for p in self._registry)

    @property
    def dtype(self) -> np.dtype:
        return self._registry[0].value.dtype if self._registry else np.dtype(np.float64)

    def zero_grad(self) -> None:
        for p in self._registry:
            p.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copies of all parameter values keyed by registry name."""
        return {p.name: p.value.copy() for p in self._registry}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for p in self._registry:
            if p.name not in state:
                raise ShapeError(f"state is missing parameter {p.name}")
            value = np.asarray(state[p.name])
            if value.shape != p.shape:
                raise ShapeError(f"parameter {p.name}: state shape {value.shape} != graph shape {p.shape}")
            p.value[...] = value

    def layers(self) -> List[Layer]:
        return self.body.layers

    # ------------------------------------------------------------------
    # Execution
    # ------------------------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        """
        Logits for a batch of windows.

        Args:
            x: Array [B, W, D]

        Returns:
            Array [B, C]

        Raises:
            ShapeError: if x does not match the input spec
        """
        x = np.asarray(x)
        W, D = self.input_shape
        if x.ndim != 3 or x.shape[1:] != (W, D):
            raise ShapeError(f"{self.name}: expected input [B,{W},{D}], got {x.shape}")
        logits = self.body.forward(x.astype(self.dtype, copy=False))
        if logits.shape != (x.shape[0], self.num_classes):
            raise ShapeError(f"{self.name}: layers produced {logits.shape}, "
                             f"expected [{x.shape[0]},{self.num_classes}]")
        self._ready_for_backward = True
        return logits

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        """
        Accumulate parameter gradients for the last forward batch.

        Returns:
            Gradient w.r.t. the input batch

        Raises:
            GraphStateError: if no forward pass preceded this call
        """
        if not self._ready_for_backward:
            raise GraphStateError(f"{self.name}: backward called without a preceding forward pass")
        self._ready_for_backward = False
        return self.body.backward(np.asarray(dlogits, dtype=self.dtype))

    def kink_state(self) -> List[np.ndarray]:
        """ReLU activation masks of the last forward pass."""
        return self.body.kink_masks()

    def cast(self, dtype) -> "ModelGraph":
        """An independent copy whose parameters (and computation) use dtype."""
        self.body.clear_cache()
        clone = copy.deepcopy(self)
        for p in clone._registry:
            p.astype(dtype)
        clone._ready_for_backward = False
        return clone

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------

    def layer_specs(self) -> List[Dict[str, Any]]:
        return [layer.config() for layer in self.body.layers]

    def summary(self) -> str:
        """One line per top-level layer with its parameter count."""
        W, D = self.input_shape
        lines = [f"{self.name}: input [{W}, {D}] -> {self.num_classes} classes"]
        for index, layer in enumerate(self.body.layers):
            count = sum(p.size for p in layer.parameters())
            lines.append(f"  {index:>2}  {layer!r:<60} {count:>10,}")
        lines.append(f"  total parameters: {self.parameter_count:,}")
        return "\n".join(lines)

    def __repr__(self) -> str:
        return f"ModelGraph(name={self.name!r}, input={self.input_shape}, classes={self.num_classes}, " \
               f"params={self.parameter_count})"


def backward(graph: ModelGraph, dloss: np.ndarray) -> List[Parameter]:
    """
    Reverse-mode pass filling every Parameter.grad.

    Returns:
        The graph's parameters (grads populated)
    """
    graph.backward(dloss)
    return graph.parameters()


def count_params(graph: ModelGraph) -> int:
    """Exact number of scalar parameters."""
    return graph.parameter_count
