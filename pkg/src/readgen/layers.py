"""Reusable neural building blocks: position-wise FFN, LSTM/BiLSTM, GRU cell,
dot-product attention, and Glorot-uniform initialization.

All parameters are plain autodiff Tensors grouped in small dataclasses; the
trainer owns mutation and the forward passes here are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DomainError, ShapeError, Tensor


@dataclass
class FfnParams:
    """Two affine layers with a ReLU between, applied per position."""
    weight1: Tensor
    bias1: Tensor
    weight2: Tensor
    bias2: Tensor


@dataclass
class LstmParams:
    """Fused gate weights: columns ordered input, forget, cell, output."""
    wx: Tensor  # d_in x 4h
    wh: Tensor  # h x 4h
    bias: Tensor  # 4h

    @property
    def hidden_size(self):
        return self.wh.data.shape[0]


@dataclass
class BiLstmParams:
    forward: LstmParams
    backward: LstmParams


@dataclass
class GruParams:
    wz: Tensor
    uz: Tensor
    bz: Tensor
    wr: Tensor
    ur: Tensor
    br: Tensor
    wh: Tensor
    uh: Tensor
    bh: Tensor

    @property
    def hidden_size(self):
        return self.uz.data.shape[0]


@dataclass
class AttentionOutput:
    weights: Tensor  # probability vector over memory positions
    context: Tensor  # weighted sum of memory rows


def glorot(rng, fan_in, fan_out, shape=None):
    """Uniform Glorot init in +/- sqrt(6 / (fan_in + fan_out))."""
    if fan_in <= 0 or fan_out <= 0:
        raise DomainError(f"glorot fans must be positive, got {fan_in}, {fan_out}")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return Tensor(rng.uniform(-limit, limit, size=shape))


def zeros(*shape):
    return Tensor(np.zeros(shape))


def init_ffn(rng, d_in, d_hidden, d_out):
    if min(d_in, d_hidden, d_out) <= 0:
        raise DomainError("ffn dimensions must be positive")
    return FfnParams(
        weight1=glorot(rng, d_in, d_hidden),
        bias1=zeros(d_hidden),
        weight2=glorot(rng, d_hidden, d_out),
        bias2=zeros(d_out),
    )


def init_lstm(rng, d_in, hidden):
    if d_in <= 0 or hidden <= 0:
        raise DomainError("lstm dimensions must be positive")
    return LstmParams(
        wx=glorot(rng, d_in, 4 * hidden),
        wh=glorot(rng, hidden, 4 * hidden),
        bias=zeros(4 * hidden),
    )


def init_bilstm(rng, d_in, hidden):
    return BiLstmParams(init_lstm(rng, d_in, hidden), init_lstm(rng, d_in, hidden))


def init_gru(rng, d_in, hidden):
    if d_in <= 0 or hidden <= 0:
        raise DomainError("gru dimensions must be positive")
    return GruParams(
        wz=glorot(rng, d_in, hidden), uz=glorot(rng, hidden, hidden), bz=zeros(hidden),
        wr=glorot(rng, d_in, hidden), ur=glorot(rng, hidden, hidden), br=zeros(hidden),
        wh=glorot(rng, d_in, hidden), uh=glorot(rng, hidden, hidden), bh=zeros(hidden),
    )


def ffn_apply(params: FfnParams, sequence):
    """Position-wise transform of an n-by-d_in sequence; rows never mix."""
    seq = ad.as_tensor(sequence)
    if seq.data.ndim != 2 or seq.data.shape[1] != params.weight1.data.shape[0]:
        raise ShapeError(
            f"ffn_apply: input {seq.shape} does not match weight1 "
            f"{params.weight1.shape}")
    hidden = ad.relu(ad.add(ad.matmul(seq, params.weight1), params.bias1))
    return ad.add(ad.matmul(hidden, params.weight2), params.bias2)


def lstm_step(params: LstmParams, x, h_prev, c_prev):
    """One LSTM step; returns (h, c)."""
    h = params.hidden_size
    gates = ad.add(ad.add(ad.matmul(x, params.wx), ad.matmul(h_prev, params.wh)),
                   params.bias)
    i = ad.sigmoid(ad.slice_cols(gates, 0, h))
    f = ad.sigmoid(ad.slice_cols(gates, h, 2 * h))
    g = ad.tanh(ad.slice_cols(gates, 2 * h, 3 * h))
    o = ad.sigmoid(ad.slice_cols(gates, 3 * h, 4 * h))
    c = ad.add(ad.mul(f, c_prev), ad.mul(i, g))
    return ad.mul(o, ad.tanh(c)), c


def lstm_run(params: LstmParams, sequence):
    """Run an LSTM over the rows of `sequence`; returns the n-by-h outputs."""
    seq = ad.as_tensor(sequence)
    n = seq.data.shape[0]
    h = ad.as_tensor(np.zeros(params.hidden_size))
    c = ad.as_tensor(np.zeros(params.hidden_size))
    outs = []
    for t in range(n):
        h, c = lstm_step(params, ad.row(seq, t), h, c)
        outs.append(h)
    return ad.stack_rows(outs)


def bilstm_run(params: BiLstmParams, sequence):
    """Bidirectional LSTM; output row t = concat(forward_t, backward_t)."""
    seq = ad.as_tensor(sequence)
    if seq.data.ndim != 2 or seq.data.shape[0] == 0:
        raise DomainError(f"bilstm_run needs a non-empty sequence, got {seq.shape}")
    fwd = lstm_run(params.forward, seq)
    bwd = ad.flip_rows(lstm_run(params.backward, ad.flip_rows(seq)))
    return ad.concat(fwd, bwd, axis=1)


def gru_step(params: GruParams, x, h_prev):
    """Standard GRU update: h' = (1 - z) * h_prev + z * h_tilde."""
    x = ad.as_tensor(x)
    h_prev = ad.as_tensor(h_prev)
    if x.data.shape[0] != params.wz.data.shape[0]:
        raise ShapeError(f"gru_step: input {x.shape} vs wz {params.wz.shape}")
    if h_prev.data.shape[0] != params.hidden_size:
        raise ShapeError(f"gru_step: state {h_prev.shape} vs hidden "
                         f"{params.hidden_size}")
    z = ad.sigmoid(ad.add(ad.add(ad.matmul(x, params.wz),
                                 ad.matmul(h_prev, params.uz)), params.bz))
    r = ad.sigmoid(ad.add(ad.add(ad.matmul(x, params.wr),
                                 ad.matmul(h_prev, params.ur)), params.br))
    h_tilde = ad.tanh(ad.add(ad.add(ad.matmul(x, params.wh),
                                    ad.matmul(ad.mul(r, h_prev), params.uh)),
                             params.bh))
    one_minus_z = ad.add(ad.scale(z, -1.0), ad.as_tensor(np.ones(params.hidden_size)))
    return ad.add(ad.mul(one_minus_z, h_prev), ad.mul(z, h_tilde))


def dot_attention(query, memory, scaled=False):
    """Dot-product attention of a d-query over n-by-d memory rows.

    Scores are raw dot products by default; `scaled` divides by sqrt(d).
    """
    query = ad.as_tensor(query)
    memory = ad.as_tensor(memory)
    if memory.data.ndim != 2 or memory.data.shape[0] == 0:
        raise DomainError(f"dot_attention: empty or non-2D memory {memory.shape}")
    if query.data.shape[0] != memory.data.shape[1]:
        raise ShapeError(f"dot_attention: query {query.shape} vs memory rows "
                         f"{memory.shape}")
    scores = ad.matmul(memory, query)
    if scaled:
        scores = ad.scale(scores, 1.0 / np.sqrt(query.data.shape[0]))
    weights = ad.softmax(scores)
    context = ad.matmul(weights, memory)
    return AttentionOutput(weights=weights, context=context)


def params_list(obj):
    """Flatten a parameter dataclass (possibly nested) into Tensor leaves."""
    if isinstance(obj, Tensor):
        return [obj]
    out = []
    for field in vars(obj).values():
        out.extend(params_list(field))
    return out
