"""
Layers Module

Stateful layers built on the kernels. Every layer caches what it needs in
forward() and, in backward(dout), accumulates into its parameters' grads and
returns the gradient w.r.t. its input. Composite layers (Sequential,
Residual) chain their children.

Axis conventions: axis 0 is the batch, axis 1 is time. Per-channel layers
work on [B, T, D, F] tensors (D sensor channels, F features per channel).
"""
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import GraphStateError, ShapeError
from src.tensornet import kernels


@dataclass(eq=False)
class Parameter:
    """A trainable tensor with its gradient and Adam moments."""
    value: np.ndarray
    name: str = ""
    grad: np.ndarray = field(init=False, repr=False)
    m: np.ndarray = field(init=False, repr=False)
    v: np.ndarray = field(init=False, repr=False)
    step: int = 0

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return int(self.value.size)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def astype(self, dtype) -> None:
        self.value = self.value.astype(dtype)
        self.grad = self.grad.astype(dtype)
        self.m = self.m.astype(dtype)
        self.v = self.v.astype(dtype)


def glorot_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    """uniform(-a, a), a = sqrt(6 / (fan_in + fan_out))."""
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base class: no parameters, identity shape."""
    kind = "layer"

    def __init__(self):
        self._params: Dict[str, Parameter] = {}
        self._cache: Any = None

    def _add_param(self, name: str, value: np.ndarray) -> Parameter:
        param = Parameter(np.asarray(value, dtype=np.float64), name=name)
        self._params[name] = param
        return param

    def children(self) -> Sequence["Layer"]:
        return ()

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, param in self._params.items():
            yield f"{prefix}{name}", param
        for index, child in enumerate(self.children()):
            yield from child.named_parameters(f"{prefix}{index}.{child.kind}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _cached(self) -> Any:
        if self._cache is None:
            raise GraphStateError(f"{self.kind}: backward called before forward")
        return self._cache

    def clear_cache(self) -> None:
        self._cache = None
        for child in self.children():
            child.clear_cache()

    def kink_masks(self) -> List[np.ndarray]:
        """Activation patterns of non-smooth units from the last forward."""
        masks: List[np.ndarray] = []
        for child in self.children():
            masks.extend(child.kink_masks())
        return masks

    def config(self) -> Dict[str, Any]:
        return {"type": self.kind}

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v}" for k, v in self.config().items() if k != "type")
        return f"{type(self).__name__}({args})"


class Linear(Layer):
    """Dense map over the last axis; any number of leading axes."""
    kind = "linear"

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weight = self._add_param("weight", glorot_uniform(rng, (in_features, out_features),
                                                               in_features, out_features))
        self.bias = self._add_param("bias", np.zeros(out_features))

    def forward(self, x):
        out = kernels.linear_forward(x, self.weight.value, self.bias.value)
        self._cache = x
        return out

    def backward(self, dout):
        x = self._cached()
        dx, dw, db = kernels.linear_backward(x, self.weight.value, dout)
        self.weight.grad += dw
        self.bias.grad += db
        return dx

    def config(self):
        return {"type": self.kind, "in": self.in_features, "out": self.out_features}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        mask = x > 0
        self._cache = mask
        return np.where(mask, x, 0.0).astype(x.dtype, copy=False)

    def backward(self, dout):
        return np.where(self._cached(), dout, 0.0).astype(dout.dtype, copy=False)

    def kink_masks(self):
        return [] if self._cache is None else [self._cache]


class TemporalPad(Layer):
    """Zero padding along the time axis (axis 1)."""
    kind = "pad"

    def __init__(self, left: int, right: int):
        super().__init__()
        self.left = left
        self.right = right

    def forward(self, x):
        widths = [(0, 0)] * x.ndim
        widths[1] = (self.left, self.right)
        self._cache = x.shape[1]
        return np.pad(x, widths)

    def backward(self, dout):
        T = self._cached()
        return dout[:, self.left:self.left + T]

    def config(self):
        return {"type": self.kind, "left": self.left, "right": self.right}


class Conv1D(Layer):
    """Valid convolution over time mixing all input channels: [B,T,Cin] -> [B,T',Cout]."""
    kind = "conv1d"

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, stride: int = 1):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        K = kernel_size
        self.kernels = self._add_param("kernels", glorot_uniform(rng, (K, in_channels, out_channels),
                                                                 K * in_channels, K * out_channels))
        self.bias = self._add_param("bias", np.zeros(out_channels))

    def forward(self, x):
        out = kernels.conv1d_forward(x, self.kernels.value, self.bias.value, self.stride)
        self._cache = x
        return out

    def backward(self, dout):
        x = self._cached()
        dx, dk, db = kernels.conv1d_backward(x, self.kernels.value, dout, self.stride)
        self.kernels.grad += dk
        self.bias.grad += db
        return dx

    def output_length(self, T: int) -> int:
        return kernels.conv1d_output_length(T, self.kernel_size, self.stride)

    def config(self):
        return {"type": self.kind, "in": self.in_channels, "out": self.out_channels,
                "kernel": self.kernel_size, "stride": self.stride}


class ChannelConv1D(Conv1D):
    """
    The same temporal filters applied to every sensor channel independently:
    [B, T, D, Fin] -> [B, T', D, Fout].
    """
    kind = "channel_conv1d"

    def forward(self, x):
        if x.ndim != 4:
            raise ShapeError(f"channel_conv1d: expected [B,T,D,F], got shape {x.shape}")
        B, T, D, F = x.shape
        folded = x.transpose(0, 2, 1, 3).reshape(B * D, T, F)
        out = super().forward(folded)
        T_out, F_out = out.shape[1], out.shape[2]
        return out.reshape(B, D, T_out, F_out).transpose(0, 2, 1, 3)

    def backward(self, dout):
        B, T_out, D, F_out = dout.shape
        folded = dout.transpose(0, 2, 1, 3).reshape(B * D, T_out, F_out)
        dx = super().backward(folded)
        T, F = dx.shape[1], dx.shape[2]
        return dx.reshape(B, D, T, F).transpose(0, 2, 1, 3)


class ExpandChannels(Layer):
    """[B, T, D] -> [B, T, D, 1]"""
    kind = "expand"

    def forward(self, x):
        self._cache = True
        return x[..., None]

    def backward(self, dout):
        self._cached()
        return dout[..., 0]


class MergeChannels(Layer):
    """[B, T, D, F] -> [B, T, D*F]"""
    kind = "merge"

    def forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], x.shape[1], -1)

    def backward(self, dout):
        return dout.reshape(self._cached())


class LSTM(Layer):
    """Single-layer LSTM returning every hidden state: [B,T,Din] -> [B,T,H]."""
    kind = "lstm"

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        H = hidden_size
        self.Wx = self._add_param("Wx", glorot_uniform(rng, (input_size, 4 * H), input_size, 4 * H))
        self.Wh = self._add_param("Wh", glorot_uniform(rng, (H, 4 * H), H, 4 * H))
        self.b = self._add_param("b", np.zeros(4 * H))

    def forward(self, x):
        hs, cache = kernels.lstm_forward(x, self.Wx.value, self.Wh.value, self.b.value, return_cache=True)
        self._cache = cache
        return hs

    def backward(self, dout):
        cache = self._cached()
        dx, dWx, dWh, db = kernels.lstm_backward(cache, dout, self.Wx.value, self.Wh.value)
        self.Wx.grad += dWx
        self.Wh.grad += dWh
        self.b.grad += db
        return dx

    def config(self):
        return {"type": self.kind, "in": self.input_size, "hidden": self.hidden_size}


class MultiHeadSelfAttention(Layer):
    """Self-attention over the second-to-last axis of [..., N, E]."""
    kind = "attention"

    def __init__(self, embed_dim: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if heads < 1 or embed_dim % heads != 0:
            raise ShapeError(f"attention: model dim E={embed_dim} is not divisible by heads={heads}")
        self.embed_dim = embed_dim
        self.heads = heads
        E = embed_dim
        for proj in ("q", "k", "v", "o"):
            self._add_param(f"W{proj}", glorot_uniform(rng, (E, E), E, E))
            if proj != "k":
                self._add_param(f"b{proj}", np.zeros(E))

    def _values(self) -> Dict[str, np.ndarray]:
        return {name: p.value for name, p in self._params.items()}

    def forward(self, x):
        out, cache = kernels.attention_forward(x, self._values(), self.heads)
        self._cache = cache
        return out

    @property
    def attention_weights(self) -> Optional[np.ndarray]:
        """Softmax weights [M, heads, N, N] of the last forward pass."""
        return None if self._cache is None else self._cache["weights"]

    def backward(self, dout):
        cache = self._cached()
        dx, grads = kernels.attention_backward(cache, dout, self._values())
        for name, grad in grads.items():
            self._params[name].grad += grad
        return dx

    def config(self):
        return {"type": self.kind, "embed": self.embed_dim, "heads": self.heads}


class LayerNorm(Layer):
    """Normalization over the last axis with learned gain and shift."""
    kind = "layernorm"

    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.dim = dim
        self.eps = eps
        self.gamma = self._add_param("gamma", np.ones(dim))
        self.beta = self._add_param("beta", np.zeros(dim))

    def forward(self, x):
        if x.shape[-1] != self.dim:
            raise ShapeError(f"layernorm: input x {x.shape} does not match dim {self.dim}")
        mean = x.mean(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(x.var(axis=-1, keepdims=True) + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std)
        return xhat * self.gamma.value + self.beta.value

    def backward(self, dout):
        xhat, inv_std = self._cached()
        self.gamma.grad += (dout * xhat).reshape(-1, self.dim).sum(axis=0)
        self.beta.grad += dout.reshape(-1, self.dim).sum(axis=0)
        dxhat = dout * self.gamma.value
        return inv_std * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                          - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))

    def config(self):
        return {"type": self.kind, "dim": self.dim, "eps": self.eps}


def sinusoidal_encoding(T: int, E: int, dtype=np.float64) -> np.ndarray:
    """pe[t, 2i] = sin(t / 10000^(2i/E)), pe[t, 2i+1] = cos(t / 10000^(2i/E))."""
    positions = np.arange(T)[:, None]
    rates = np.power(10000.0, -np.arange(0, E, 2) / E)
    pe = np.zeros((T, E))
    pe[:, 0::2] = np.sin(positions * rates)
    pe[:, 1::2] = np.cos(positions * rates[:E // 2])
    return pe.astype(dtype)


class PositionalEncoding(Layer):
    """Adds a fixed sinusoidal encoding to [B, T, E]."""
    kind = "posenc"

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim

    def forward(self, x):
        if x.shape[-1] != self.dim:
            raise ShapeError(f"posenc: input x {x.shape} does not match dim {self.dim}")
        self._cache = True
        return x + sinusoidal_encoding(x.shape[1], self.dim, x.dtype)

    def backward(self, dout):
        self._cached()
        return dout

    def config(self):
        return {"type": self.kind, "dim": self.dim}


class TemporalAttentionPool(Layer):
    """
    Learned scoring vector w: a = softmax_t(x[t] . w), out = sum_t a[t] x[t].
    [B, T, H] -> [B, H]
    """
    kind = "attnpool"

    def __init__(self, dim: int, rng: np.random.Generator):
        super().__init__()
        self.dim = dim
        limit = math.sqrt(6.0 / (dim + 1))
        self.w = self._add_param("w", rng.uniform(-limit, limit, size=dim))

    def forward(self, x):
        if x.ndim != 3 or x.shape[-1] != self.dim:
            raise ShapeError(f"attnpool: expected [B,T,{self.dim}], got shape {x.shape}")
        weights = kernels.softmax(x @ self.w.value, axis=1)
        self._cache = (x, weights)
        return np.einsum("bt,bth->bh", weights, x)

    def backward(self, dout):
        x, weights = self._cached()
        dweights = np.einsum("bth,bh->bt", x, dout)
        dscores = kernels.softmax_backward(weights, dweights, axis=1)
        self.w.grad += np.einsum("bt,bth->h", dscores, x)
        return weights[:, :, None] * dout[:, None, :] + dscores[:, :, None] * self.w.value

    def config(self):
        return {"type": self.kind, "dim": self.dim}


class LastTimestep(Layer):
    """[B, T, H] -> [B, H] (the final step)."""
    kind = "last"

    def forward(self, x):
        self._cache = x.shape
        return x[:, -1]

    def backward(self, dout):
        dx = np.zeros(self._cached(), dtype=dout.dtype)
        dx[:, -1] = dout
        return dx


class Sequential(Layer):
    kind = "seq"

    def __init__(self, layers: Sequence[Layer]):
        super().__init__()
        self.layers = list(layers)

    def children(self):
        return self.layers

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def config(self):
        return {"type": self.kind, "layers": [layer.config() for layer in self.layers]}


class Residual(Layer):
    """x + inner(x)"""
    kind = "residual"

    def __init__(self, inner: Layer):
        super().__init__()
        self.inner = inner

    def children(self):
        return (self.inner,)

    def forward(self, x):
        out = self.inner.forward(x)
        if out.shape != x.shape:
            raise ShapeError(f"residual: inner output {out.shape} does not match input {x.shape}")
        self._cache = True
        return x + out

    def backward(self, dout):
        self._cached()
        return dout + self.inner.backward(dout)

    def config(self):
        return {"type": self.kind, "inner": self.inner.config()}
