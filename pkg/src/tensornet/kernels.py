"""
Tensor Kernels Module

Stateless forward/backward math for the layer set: dense maps, valid 1-D
convolution over time, the LSTM cell, multi-head self-attention, softmax and
the softmax cross-entropy loss. Tensors are plain numpy arrays, row-major,
float64 unless a caller casts them.

Shape conventions:
    dense        x [..., in]          weight [in, out]          bias [out]
    conv1d       x [B, T, Cin]        kernels [K, Cin, Cout]    bias [Cout]
    lstm         x [B, T, Din]        Wx [Din, 4H]  Wh [H, 4H]  b [4H]   (gate order i, f, g, o)
    attention    x [..., N, E]        Wq/Wk/Wv/Wo [E, E]        bq/bv/bo [E]
"""
import math
from typing import Dict, Mapping, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from src.errors import ShapeError

ATTENTION_KEYS = ("Wq", "bq", "Wk", "Wv", "bv", "Wo", "bo")


def _shape(a: np.ndarray) -> str:
    return "x".join(str(n) for n in a.shape) or "scalar"


# ---------------------------------------------------------------------------
# Dense
# ---------------------------------------------------------------------------

def linear_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """
    out = x . weight + bias over the last axis of x.

    Raises:
        ShapeError: naming the operands when the inner dimensions disagree
    """
    if weight.ndim != 2 or bias.shape != (weight.shape[1],):
        raise ShapeError(f"linear: weight {_shape(weight)} and bias {_shape(bias)} disagree")
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input x {_shape(x)} does not match weight {_shape(weight)}")
    return x @ weight + bias


def linear_backward(x: np.ndarray, weight: np.ndarray,
                    dout: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dx, dweight, dbias)."""
    rows_x = x.reshape(-1, weight.shape[0])
    rows_d = dout.reshape(-1, weight.shape[1])
    return dout @ weight.T, rows_x.T @ rows_d, rows_d.sum(axis=0)


# ---------------------------------------------------------------------------
# Convolution over time
# ---------------------------------------------------------------------------

def conv1d_output_length(T: int, K: int, stride: int) -> int:
    """floor((T - K) / stride) + 1, or 0 when the kernel does not fit."""
    if K > T:
        return 0
    return (T - K) // stride + 1


def _conv_columns(x: np.ndarray, K: int, stride: int) -> np.ndarray:
    # [B, T', Cin, K] -> [B, T', K, Cin]
    windows = sliding_window_view(x, K, axis=1)[:, ::stride]
    return windows.transpose(0, 1, 3, 2)


def conv1d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray,
                   stride: int = 1) -> np.ndarray:
    """
    Valid 1-D convolution along the time axis.

    out[b, t, o] = sum_{k, c} x[b, t*stride + k, c] * kernels[k, c, o] + bias[o]

    Args:
        x: Input [B, T, Cin]
        kernels: Filters [K, Cin, Cout]
        bias: Bias [Cout]
        stride: Step between output positions (>= 1)

    Returns:
        Array [B, T', Cout] with T' = floor((T - K) / stride) + 1

    Raises:
        ShapeError: if K > T or the channel counts disagree
    """
    if stride < 1:
        raise ShapeError(f"conv1d: stride must be >= 1, got {stride}")
    if x.ndim != 3 or kernels.ndim != 3:
        raise ShapeError(f"conv1d: expected x [B,T,Cin] and kernels [K,Cin,Cout], "
                         f"got x {_shape(x)} and kernels {_shape(kernels)}")
    K, c_in, c_out = kernels.shape
    B, T, _ = x.shape
    if x.shape[2] != c_in:
        raise ShapeError(f"conv1d: input x {_shape(x)} has {x.shape[2]} channels, kernels {_shape(kernels)} expect {c_in}")
    if bias.shape != (c_out,):
        raise ShapeError(f"conv1d: bias {_shape(bias)} does not match kernels {_shape(kernels)}")
    if K > T:
        raise ShapeError(f"conv1d: kernel size K={K} exceeds sequence length T={T}")
    cols = _conv_columns(x, K, stride)
    T_out = cols.shape[1]
    out = cols.reshape(B * T_out, K * c_in) @ kernels.reshape(K * c_in, c_out)
    return out.reshape(B, T_out, c_out) + bias


def conv1d_backward(x: np.ndarray, kernels: np.ndarray, dout: np.ndarray,
                    stride: int = 1) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dx, dkernels, dbias) for conv1d_forward."""
    K, c_in, c_out = kernels.shape
    B, T_out, _ = dout.shape
    cols = _conv_columns(x, K, stride).reshape(B * T_out, K * c_in)
    d_rows = dout.reshape(B * T_out, c_out)
    dkernels = (cols.T @ d_rows).reshape(K, c_in, c_out)
    dbias = d_rows.sum(axis=0)
    dcols = (d_rows @ kernels.reshape(K * c_in, c_out).T).reshape(B, T_out, K, c_in)
    dx = np.zeros_like(x)
    span = stride * (T_out - 1) + 1
    for k in range(K):
        dx[:, k:k + span:stride, :] += dcols[:, :, k, :]
    return dx, dkernels, dbias


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------

def _check_lstm(x: np.ndarray, Wx: np.ndarray, Wh: np.ndarray, b: np.ndarray) -> int:
    if Wh.ndim != 2 or Wh.shape[1] != 4 * Wh.shape[0]:
        raise ShapeError(f"lstm: recurrent weight Wh {_shape(Wh)} must be [H, 4H]")
    H = Wh.shape[0]
    if Wx.ndim != 2 or Wx.shape[1] != 4 * H:
        raise ShapeError(f"lstm: input weight Wx {_shape(Wx)} does not match Wh {_shape(Wh)}")
    if b.shape != (4 * H,):
        raise ShapeError(f"lstm: bias b {_shape(b)} does not match Wh {_shape(Wh)}")
    if x.shape[-1] != Wx.shape[0]:
        raise ShapeError(f"lstm: input x {_shape(x)} does not match Wx {_shape(Wx)}")
    return H


def lstm_step(x_t: np.ndarray, h: np.ndarray, c: np.ndarray, Wx: np.ndarray, Wh: np.ndarray,
              b: np.ndarray) -> Tuple[np.ndarray, np.ndarray, Tuple[np.ndarray, ...]]:
    """
    One LSTM cell update.

    Returns:
        (h_new, c_new, (i, f, g, o)) with gates after their nonlinearity
    """
    H = h.shape[-1]
    z = x_t @ Wx + h @ Wh + b
    i = expit(z[:, :H])
    f = expit(z[:, H:2 * H])
    g = np.tanh(z[:, 2 * H:3 * H])
    o = expit(z[:, 3 * H:])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new, (i, f, g, o)


def lstm_forward(x: np.ndarray, Wx: np.ndarray, Wh: np.ndarray, b: np.ndarray,
                 return_cache: bool = False) -> Union[np.ndarray, Tuple[np.ndarray, Dict]]:
    """
    Run an LSTM over every timestep from a zero initial state.

    Args:
        x: Input [B, T, Din]
        Wx, Wh, b: Gate parameters, gate order input, forget, cell, output
        return_cache: Also return what lstm_backward needs

    Returns:
        Hidden states [B, T, H] (and the cache when requested)
    """
    if x.ndim != 3:
        raise ShapeError(f"lstm: expected input [B,T,Din], got x {_shape(x)}")
    H = _check_lstm(x, Wx, Wh, b)
    B, T, _ = x.shape
    h = np.zeros((B, H), dtype=x.dtype)
    c = np.zeros((B, H), dtype=x.dtype)
    hs = np.empty((B, T, H), dtype=x.dtype)
    h_prev = np.empty_like(hs)
    c_prev = np.empty_like(hs)
    gates = np.empty((B, T, 4, H), dtype=x.dtype)
    tanh_c = np.empty_like(hs)
    for t in range(T):
        h_prev[:, t] = h
        c_prev[:, t] = c
        h, c, (i, f, g, o) = lstm_step(x[:, t], h, c, Wx, Wh, b)
        hs[:, t] = h
        gates[:, t, 0], gates[:, t, 1], gates[:, t, 2], gates[:, t, 3] = i, f, g, o
        tanh_c[:, t] = np.tanh(c)
    if not return_cache:
        return hs
    return hs, {"x": x, "h_prev": h_prev, "c_prev": c_prev, "gates": gates, "tanh_c": tanh_c}


def lstm_backward(cache: Mapping[str, np.ndarray], dhs: np.ndarray, Wx: np.ndarray,
                  Wh: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Backpropagation through time.

    Args:
        cache: From lstm_forward(..., return_cache=True)
        dhs: Loss gradient w.r.t. every hidden state [B, T, H]

    Returns:
        (dx, dWx, dWh, db)
    """
    x, h_prev, c_prev = cache["x"], cache["h_prev"], cache["c_prev"]
    gates, tanh_c = cache["gates"], cache["tanh_c"]
    B, T, H = dhs.shape
    dz = np.empty((B, T, 4 * H), dtype=dhs.dtype)
    dh_next = np.zeros((B, H), dtype=dhs.dtype)
    dc_next = np.zeros((B, H), dtype=dhs.dtype)
    for t in reversed(range(T)):
        i, f, g, o = gates[:, t, 0], gates[:, t, 1], gates[:, t, 2], gates[:, t, 3]
        dh = dhs[:, t] + dh_next
        do = dh * tanh_c[:, t]
        dc = dc_next + dh * o * (1.0 - tanh_c[:, t] ** 2)
        dz[:, t, :H] = dc * g * i * (1.0 - i)
        dz[:, t, H:2 * H] = dc * c_prev[:, t] * f * (1.0 - f)
        dz[:, t, 2 * H:3 * H] = dc * i * (1.0 - g ** 2)
        dz[:, t, 3 * H:] = do * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dz[:, t] @ Wh.T
    dz_rows = dz.reshape(B * T, 4 * H)
    dWx = x.reshape(B * T, -1).T @ dz_rows
    dWh = h_prev.reshape(B * T, H).T @ dz_rows
    db = dz_rows.sum(axis=0)
    dx = dz @ Wx.T
    return dx, dWx, dWh, db


# ---------------------------------------------------------------------------
# Softmax, attention
# ---------------------------------------------------------------------------

def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max-subtracted)."""
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_backward(probs: np.ndarray, dprobs: np.ndarray, axis: int = -1) -> np.ndarray:
    return probs * (dprobs - np.sum(dprobs * probs, axis=axis, keepdims=True))


def _split_heads(t: np.ndarray, heads: int) -> np.ndarray:
    M, N, E = t.shape
    return t.reshape(M, N, heads, E // heads).transpose(0, 2, 1, 3)


def _merge_heads(t: np.ndarray) -> np.ndarray:
    M, h, N, dh = t.shape
    return t.transpose(0, 2, 1, 3).reshape(M, N, h * dh)


def attention_forward(x: np.ndarray, params: Mapping[str, np.ndarray],
                      heads: int) -> Tuple[np.ndarray, Dict]:
    """
    Multi-head self-attention over the second-to-last axis, with cache.

    Keys carry no bias: a key bias shifts every score of a query by the same
    amount and cancels in the softmax.
    """
    missing = [k for k in ATTENTION_KEYS if k not in params]
    if missing:
        raise ShapeError(f"attention: missing parameters {missing}")
    E = x.shape[-1]
    if heads < 1 or E % heads != 0:
        raise ShapeError(f"attention: model dim E={E} is not divisible by heads={heads}")
    for key in ("Wq", "Wk", "Wv", "Wo"):
        if params[key].shape != (E, E):
            raise ShapeError(f"attention: {key} {_shape(params[key])} does not match input x {_shape(x)}")
    lead, N = x.shape[:-2], x.shape[-2]
    xs = x.reshape(-1, N, E)
    dh = E // heads
    scale = 1.0 / math.sqrt(dh)

    q = _split_heads(xs @ params["Wq"] + params["bq"], heads)
    k = _split_heads(xs @ params["Wk"], heads)
    v = _split_heads(xs @ params["Wv"] + params["bv"], heads)
    weights = softmax((q @ k.transpose(0, 1, 3, 2)) * scale, axis=-1)
    ctx = _merge_heads(weights @ v)
    out = ctx @ params["Wo"] + params["bo"]
    cache = {"x": xs, "q": q, "k": k, "v": v, "weights": weights, "ctx": ctx,
             "heads": heads, "scale": scale, "lead": lead}
    return out.reshape(*lead, N, E), cache


def self_attention_forward(x: np.ndarray, params: Mapping[str, np.ndarray], heads: int) -> np.ndarray:
    """
    softmax(Q K^T / sqrt(E / heads)) V followed by the output projection.

    Args:
        x: Tokens [..., N, E]
        params: Wq, bq, Wk, Wv, bv, Wo, bo
        heads: Number of heads; must divide E

    Returns:
        Array with the shape of x
    """
    return attention_forward(x, params, heads)[0]


def attention_backward(cache: Mapping, dout: np.ndarray,
                       params: Mapping[str, np.ndarray]) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """Returns (dx, {parameter name: gradient})."""
    xs, q, k, v = cache["x"], cache["q"], cache["k"], cache["v"]
    weights, ctx, heads, scale = cache["weights"], cache["ctx"], cache["heads"], cache["scale"]
    M, N, E = xs.shape
    d = dout.reshape(M, N, E)
    rows_x = xs.reshape(-1, E)

    grads = {
        "Wo": ctx.reshape(-1, E).T @ d.reshape(-1, E),
        "bo": d.reshape(-1, E).sum(axis=0),
    }
    dctx = _split_heads(d @ params["Wo"].T, heads)
    dweights = dctx @ v.transpose(0, 1, 3, 2)
    dv = weights.transpose(0, 1, 3, 2) @ dctx
    dscores = softmax_backward(weights, dweights) * scale
    dq = dscores @ k
    dk = dscores.transpose(0, 1, 3, 2) @ q

    dq, dk, dv = _merge_heads(dq), _merge_heads(dk), _merge_heads(dv)
    grads["Wq"] = rows_x.T @ dq.reshape(-1, E)
    grads["bq"] = dq.reshape(-1, E).sum(axis=0)
    grads["Wk"] = rows_x.T @ dk.reshape(-1, E)
    grads["Wv"] = rows_x.T @ dv.reshape(-1, E)
    grads["bv"] = dv.reshape(-1, E).sum(axis=0)
    dx = dq @ params["Wq"].T + dk @ params["Wk"].T + dv @ params["Wv"].T
    return dx.reshape(dout.shape), grads


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

def softmax_cross_entropy(logits: np.ndarray, labels) -> Tuple[float, np.ndarray]:
    """
    Mean negative log-likelihood of the true labels.

    Args:
        logits: Array [B, C]
        labels: Integer class indices [B]

    Returns:
        (loss, dlogits) with dlogits = (softmax - onehot) / B

    Raises:
        ValueError: on a label outside [0, C)
    """
    if logits.ndim != 2:
        raise ShapeError(f"cross-entropy: expected logits [B,C], got {_shape(logits)}")
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    B, C = logits.shape
    if labels.shape[0] != B:
        raise ShapeError(f"cross-entropy: {labels.shape[0]} labels for logits {_shape(logits)}")
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        bad = labels[(labels < 0) | (labels >= C)][0]
        raise ValueError(f"label {bad} outside [0, {C})")
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=1))
    rows = np.arange(B)
    loss = float(np.mean(log_norm - shifted[rows, labels]))
    dlogits = np.exp(shifted - log_norm[:, None])
    dlogits[rows, labels] -= 1.0
    return loss, dlogits / B
