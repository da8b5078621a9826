"""
Model Builders Module

Concrete configurations of the three classifiers:

- TinyHAR: per-channel conv encoder, cross-channel self-attention, channel
  fusion, one LSTM layer, temporal attention pooling.
- DeepConvLSTM: four full-channel conv layers, two stacked LSTM layers,
  last-timestep classifier.
- SA-HAR: conv embedding, sinusoidal positions, two post-norm transformer
  blocks, temporal attention pooling.

Every convolution is preceded by a zero-padding layer of K // 2 frames on
each side, so lengths follow floor((T + 2*(K//2) - K) / stride) + 1.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np

from src.errors import ConfigError
from src.tensornet.checkpoint import load_checkpoint, read_checkpoint_manifest
from src.tensornet.graph import ModelGraph
from src.tensornet.layers import (
    ChannelConv1D,
    Conv1D,
    ExpandChannels,
    LSTM,
    LastTimestep,
    Layer,
    LayerNorm,
    Linear,
    MergeChannels,
    MultiHeadSelfAttention,
    PositionalEncoding,
    ReLU,
    Residual,
    Sequential,
    TemporalAttentionPool,
    TemporalPad,
)

_logger = logging.getLogger(__name__)

TINYHAR = "tinyhar"
DEEPCONVLSTM = "deepconvlstm"
SAHAR = "sahar"
MODEL_NAMES = (TINYHAR, DEEPCONVLSTM, SAHAR)

DISPLAY_NAMES = {TINYHAR: "TinyHAR", DEEPCONVLSTM: "DeepConvLSTM", SAHAR: "SA-HAR"}

MIN_WINDOW = {TINYHAR: 8, DEEPCONVLSTM: 16, SAHAR: 8}

DEFAULT_HYPERPARAMETERS: Dict[str, Dict[str, int]] = {
    TINYHAR: {"filters": 16, "kernel": 5, "conv_layers": 4, "strided_layers": 2, "heads": 1},
    DEEPCONVLSTM: {"filters": 64, "kernel": 5, "conv_layers": 4, "hidden": 256, "lstm_layers": 2},
    SAHAR: {"embed": 128, "kernel": 5, "heads": 4, "ff": 256, "blocks": 2},
}


def parse_model_name(value: str) -> str:
    """Accepts canonical or display names (case and '-' insensitive)."""
    key = value.strip().lower().replace("-", "").replace("_", "")
    if key in MODEL_NAMES:
        return key
    raise ConfigError(f"unknown model {value!r}; valid models: {', '.join(MODEL_NAMES)}")


@dataclass(frozen=True)
class ModelSpec:
    """What to build: architecture name, input (W, D), classes C and overrides."""
    name: str
    window: int = 32
    dims: int = 48
    classes: int = 5
    seed: int = 0
    hyperparameters: Dict[str, int] = field(default_factory=dict)

    def resolved_hyperparameters(self) -> Dict[str, int]:
        merged = dict(DEFAULT_HYPERPARAMETERS[parse_model_name(self.name)])
        unknown = set(self.hyperparameters) - set(merged)
        if unknown:
            raise ConfigError(f"unknown hyperparameters for {self.name}: {sorted(unknown)}")
        merged.update(self.hyperparameters)
        return merged

    @property
    def display_name(self) -> str:
        return DISPLAY_NAMES[parse_model_name(self.name)]

    def with_shape(self, window: int, dims: int, classes: int) -> "ModelSpec":
        return ModelSpec(self.name, window, dims, classes, self.seed, dict(self.hyperparameters))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": parse_model_name(self.name),
            "window": self.window,
            "dims": self.dims,
            "classes": self.classes,
            "seed": self.seed,
            "hyperparameters": self.resolved_hyperparameters(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelSpec":
        return cls(name=parse_model_name(data["name"]), window=int(data["window"]), dims=int(data["dims"]),
                   classes=int(data["classes"]), seed=int(data.get("seed", 0)),
                   hyperparameters=dict(data.get("hyperparameters", {})))


# ---------------------------------------------------------------------------
# Shape arithmetic
# ---------------------------------------------------------------------------

def conv_lengths(W: int, kernel: int, strides: List[int]) -> List[int]:
    """Temporal length after each padded convolution."""
    pad = kernel // 2
    lengths = []
    T = W
    for stride in strides:
        T = (T + 2 * pad - kernel) // stride + 1 if T + 2 * pad >= kernel else 0
        lengths.append(T)
    return lengths


def _check_input(model: str, W: int, D: int, C: int, lengths: List[int]) -> None:
    if D < 1:
        raise ConfigError(f"{DISPLAY_NAMES[model]}: input dims D must be >= 1, got {D}")
    if C < 2:
        raise ConfigError(f"{DISPLAY_NAMES[model]}: need at least 2 classes, got {C}")
    if W < MIN_WINDOW[model] or min(lengths, default=0) < 1:
        arithmetic = " -> ".join(str(n) for n in [W] + lengths)
        raise ConfigError(f"{DISPLAY_NAMES[model]} needs W >= {MIN_WINDOW[model]}; "
                          f"conv stack lengths for W={W}: {arithmetic}")


def _padded_conv(layer_cls, c_in: int, c_out: int, kernel: int, stride: int,
                 rng: np.random.Generator) -> List[Layer]:
    pad = kernel // 2
    return [TemporalPad(pad, pad), layer_cls(c_in, c_out, kernel, rng, stride=stride), ReLU()]


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def build_tinyhar(W: int, D: int, C: int, seed: int = 0, **overrides) -> ModelGraph:
    """
    TinyHAR: shared per-channel temporal convolutions, single-head attention
    across the D channels at every timestep, fusion to 2F features, one LSTM
    layer of width 2F, attention pooling over time and a linear classifier.

    Args:
        W: Window length in frames (>= 8)
        D: Input dims
        C: Number of classes
        seed: Initialization seed
        **overrides: filters, kernel, conv_layers, strided_layers, heads

    Returns:
        ModelGraph mapping [B, W, D] to [B, C]
    """
    spec = ModelSpec(TINYHAR, W, D, C, seed, overrides)
    hp = spec.resolved_hyperparameters()
    F, K = hp["filters"], hp["kernel"]
    strides = [2 if i < hp["strided_layers"] else 1 for i in range(hp["conv_layers"])]
    _check_input(TINYHAR, W, D, C, conv_lengths(W, K, strides))

    rng = np.random.default_rng(seed)
    layers: List[Layer] = [ExpandChannels()]
    for i, stride in enumerate(strides):
        layers += _padded_conv(ChannelConv1D, 1 if i == 0 else F, F, K, stride, rng)
    layers += [
        Residual(MultiHeadSelfAttention(F, hp["heads"], rng)),
        MergeChannels(),
        Linear(D * F, 2 * F, rng),
        ReLU(),
        LSTM(2 * F, 2 * F, rng),
        TemporalAttentionPool(2 * F, rng),
        Linear(2 * F, C, rng),
    ]
    return ModelGraph(layers, (W, D), C, name=DISPLAY_NAMES[TINYHAR], spec=spec.to_dict())


def build_deepconvlstm(W: int, D: int, C: int, seed: int = 0, **overrides) -> ModelGraph:
    """
    DeepConvLSTM: conv layers over time mixing all D dims, stacked LSTM
    layers, classifier on the last timestep.

    Args:
        W: Window length in frames (>= 16)
        D: Input dims
        C: Number of classes
        seed: Initialization seed
        **overrides: filters, kernel, conv_layers, hidden, lstm_layers
    """
    spec = ModelSpec(DEEPCONVLSTM, W, D, C, seed, overrides)
    hp = spec.resolved_hyperparameters()
    F, K, H = hp["filters"], hp["kernel"], hp["hidden"]
    _check_input(DEEPCONVLSTM, W, D, C, conv_lengths(W, K, [1] * hp["conv_layers"]))

    rng = np.random.default_rng(seed)
    layers: List[Layer] = []
    for i in range(hp["conv_layers"]):
        layers += _padded_conv(Conv1D, D if i == 0 else F, F, K, 1, rng)
    for i in range(hp["lstm_layers"]):
        layers.append(LSTM(F if i == 0 else H, H, rng))
    layers += [LastTimestep(), Linear(H, C, rng)]
    return ModelGraph(layers, (W, D), C, name=DISPLAY_NAMES[DEEPCONVLSTM], spec=spec.to_dict())


def build_sahar(W: int, D: int, C: int, seed: int = 0, **overrides) -> ModelGraph:
    """
    SA-HAR: conv embedding to E dims, sinusoidal positional encoding,
    transformer blocks (multi-head attention and a ReLU feed-forward, each
    residual and followed by layer normalization), attention pooling and a
    linear classifier.

    Args:
        W: Window length in frames (>= 8)
        D: Input dims
        C: Number of classes
        seed: Initialization seed
        **overrides: embed, kernel, heads, ff, blocks
    """
    spec = ModelSpec(SAHAR, W, D, C, seed, overrides)
    hp = spec.resolved_hyperparameters()
    E, K = hp["embed"], hp["kernel"]
    _check_input(SAHAR, W, D, C, conv_lengths(W, K, [1]))

    rng = np.random.default_rng(seed)
    layers: List[Layer] = _padded_conv(Conv1D, D, E, K, 1, rng)
    layers.append(PositionalEncoding(E))
    for _ in range(hp["blocks"]):
        layers += [
            Residual(MultiHeadSelfAttention(E, hp["heads"], rng)),
            LayerNorm(E),
            Residual(Sequential([Linear(E, hp["ff"], rng), ReLU(), Linear(hp["ff"], E, rng)])),
            LayerNorm(E),
        ]
    layers += [TemporalAttentionPool(E, rng), Linear(E, C, rng)]
    return ModelGraph(layers, (W, D), C, name=DISPLAY_NAMES[SAHAR], spec=spec.to_dict())


_BUILDERS = {TINYHAR: build_tinyhar, DEEPCONVLSTM: build_deepconvlstm, SAHAR: build_sahar}


def build_model(spec: ModelSpec) -> ModelGraph:
    """Dispatch on spec.name."""
    name = parse_model_name(spec.name)
    graph = _BUILDERS[name](spec.window, spec.dims, spec.classes, spec.seed, **spec.hyperparameters)
    _logger.debug("Built %r", graph)
    return graph


def load_model(prefix: str) -> ModelGraph:
    """Rebuild a graph from a checkpoint manifest and load its parameters."""
    manifest = read_checkpoint_manifest(prefix)
    graph = build_model(ModelSpec.from_dict(manifest["spec"]))
    load_checkpoint(prefix, graph)
    return graph
