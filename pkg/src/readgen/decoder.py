"""Attentional GRU response generator: recurrent state update with
dot-product attention over the encoder memory, temperature softmax output,
teacher-forced training loss, and top-k sampling inference."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import layers
from .autodiff import DomainError, Tensor
from .textdata import BOS_ID


@dataclass
class DecoderParams:
    gru: layers.GruParams      # input: embedding dim, hidden: H
    w2: Tensor                 # 2H x H state mixer
    w1: Tensor                 # H x V output projection
    b: Tensor                  # V
    h0_proj: Tensor            # H_pool x H, fixed projection for the seed state
    out_embedding: Tensor      # V x E (may alias the input embedding table)


@dataclass
class GenerationConfig:
    tau: float = 1.0
    k: int = 20
    max_length: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.tau <= 0:
            raise DomainError(f"temperature must be positive, got {self.tau}")
        if self.k < 1:
            raise DomainError(f"top-k must be >= 1, got {self.k}")
        if self.max_length < 1:
            raise DomainError(f"max_length must be >= 1, got {self.max_length}")


@dataclass
class DecoderState:
    h: Tensor
    prev_embedding: Tensor
    step: int = 0
    prev_token: int = -1
    z: Tensor | None = None


def init_decoder(rng, embedding_dim, hidden_size, vocab_size,
                 tied_embedding=None):
    """Fresh decoder parameters; pass tied_embedding to share the input
    word-embedding table instead of allocating an output-side one."""
    out_emb = tied_embedding if tied_embedding is not None else \
        layers.glorot(rng, vocab_size, embedding_dim)
    return DecoderParams(
        gru=layers.init_gru(rng, embedding_dim, hidden_size),
        w2=layers.glorot(rng, 2 * hidden_size, hidden_size),
        w1=layers.glorot(rng, hidden_size, vocab_size),
        b=layers.zeros(vocab_size),
        h0_proj=layers.glorot(rng, hidden_size, hidden_size),
        out_embedding=out_emb,
    )


def init_state(memory, params, bos_id):
    """Seed state: h0 is the pooled history vector through the fixed
    projection; the previous token is BOS."""
    h0 = ad.matmul(memory.history_pooled, params.h0_proj)
    return DecoderState(h=h0,
                        prev_embedding=ad.row(params.out_embedding, bos_id),
                        step=0, prev_token=bos_id)


def decode_step(state, memory, params, config, dropout=None):
    """One generation step.

    z = GRU(prev embedding, h); h' = W2ᵀ[z ++ attention(z, M)];
    p = softmax((W1ᵀh' + b) / tau). Returns (p, next state, attention
    weights over memory rows).
    """
    z = layers.gru_step(params.gru, state.prev_embedding, state.h)
    att = layers.dot_attention(z, memory.memory)
    h = ad.matmul(ad.concat(z, att.context), params.w2)
    if dropout is not None:
        h = ad.dropout(h, dropout(h.data.shape))
    logits = ad.add(ad.matmul(h, params.w1), params.b)
    dist = ad.softmax(logits, tau=config.tau)
    next_state = DecoderState(h=h, prev_embedding=state.prev_embedding,
                              step=state.step + 1, prev_token=state.prev_token,
                              z=z)
    return dist, next_state, att.weights


def teacher_forced_loss(response_ids, memory, params, config, eos_id,
                        dropout=None):
    """Mean per-token negative log-likelihood with gold tokens fed back.

    EOS is appended to the targets. Returns (mean loss tensor, list of
    per-token loss tensors).
    """
    if not response_ids:
        raise DomainError("teacher forcing requires a non-empty gold response")
    targets = list(response_ids) + [eos_id]
    state = init_state(memory, params, bos_id=BOS_ID)
    per_token = []
    for t, target in enumerate(targets):
        dist, state, _ = decode_step(state, memory, params, config,
                                     dropout=dropout)
        per_token.append(ad.scale(ad.log(ad.gather(dist, target)), -1.0))
        state.prev_embedding = ad.row(params.out_embedding, target)
        state.prev_token = target
    return ad.mean_scalars(per_token), per_token


def top_k_sample(probs, k, rng):
    """Draw a token id from the k highest-probability entries, renormalized.

    Ties at the cutoff break toward lower token ids. k above the vocabulary
    size is clamped with a warning.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or probs.size == 0:
        raise DomainError("top_k_sample expects a non-empty 1-D distribution")
    if k < 1:
        raise DomainError(f"top-k must be >= 1, got {k}")
    if k > probs.size:
        warnings.warn(f"top-k {k} exceeds vocabulary size {probs.size}; clamped")
        k = probs.size
    ids = np.arange(probs.size)
    order = np.lexsort((ids, -probs))  # by probability desc, then id asc
    keep = order[:k]
    kept = probs[keep]
    kept = kept / kept.sum()
    return int(keep[rng.choice(k, p=kept)])


def greedy_token(probs):
    """Argmax with ties toward the lower id (numpy argmax convention)."""
    return int(np.asarray(probs).argmax())


def generate(memory, params, config, vocab, rng=None, greedy=False):
    """Sample a response until EOS or max_length.

    Returns (tokens, attention matrix) where the matrix holds one row of
    memory-attention weights per generated step (including the EOS step).
    """
    rng = rng or np.random.default_rng(config.seed)
    state = init_state(memory, params, bos_id=vocab.bos_id)
    tokens, attn_rows = [], []
    for _ in range(config.max_length):
        dist, state, weights = decode_step(state, memory, params, config)
        attn_rows.append(weights.data.copy())
        token_id = greedy_token(dist.data) if greedy else \
            top_k_sample(dist.data, config.k, rng)
        if token_id == vocab.eos_id:
            break
        tokens.append(vocab.id_to_token[token_id])
        state.prev_embedding = ad.row(params.out_embedding, token_id)
        state.prev_token = token_id
    return tokens, np.array(attn_rows)


def attention_dump(response_tokens, doc_tokens, attn_matrix):
    """JSON-ready record of per-step attention over document tokens."""
    return {
        "response_tokens": list(response_tokens),
        "doc_tokens": list(doc_tokens),
        "weights": [[float(w) for w in row] for row in attn_matrix],
    }
