"""Three-block encoder over (conversation history, document):
lexicon encoding (embedding + per-stream position-wise FFN), contextual
encoding (one shared BiLSTM, optionally concatenated with pretrained
contextual vectors), and memory construction (cross-attention, self-attention,
final BiLSTM). Also provides the attention pooling that seeds the decoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import layers
from .autodiff import DomainError, Tensor
from .textdata import SEP


@dataclass
class EncoderParams:
    ffn_history: layers.FfnParams
    ffn_document: layers.FfnParams
    contextual: layers.BiLstmParams    # shared by both streams
    self_proj_w: Tensor                # 4H x H
    self_proj_b: Tensor                # H
    memory_bilstm: layers.BiLstmParams
    pool_query: Tensor                 # H


@dataclass
class EncoderMemory:
    memory: Tensor              # n x H, one row per document flat token
    history_contextual: Tensor  # m x H
    history_pooled: Tensor      # H
    doc_tokens: list            # surface forms aligned with memory rows
    cross_weights: Tensor | None = None  # n x m rows (diagnostics)
    self_weights: Tensor | None = None   # n x n rows (diagnostics)


def init_encoder(rng, embedding_dim, hidden_size, cove_dim=0):
    """Fresh Glorot-initialized encoder parameters.

    hidden_size must be even: both BiLSTMs use hidden_size // 2 per
    direction so every stream is hidden_size wide.
    """
    if hidden_size % 2:
        raise DomainError(f"hidden_size must be even, got {hidden_size}")
    h = hidden_size
    return EncoderParams(
        ffn_history=layers.init_ffn(rng, embedding_dim, h, h),
        ffn_document=layers.init_ffn(rng, embedding_dim, h, h),
        contextual=layers.init_bilstm(rng, h + cove_dim, h // 2),
        self_proj_w=layers.glorot(rng, 4 * h, h),
        self_proj_b=layers.zeros(h),
        memory_bilstm=layers.init_bilstm(rng, h, h // 2),
        pool_query=layers.glorot(rng, h, 1, shape=(h,)),
    )


def flatten_history(history, vocab):
    """History turns joined in order with a separator token between turns."""
    if not history:
        raise DomainError("empty conversation history")
    tokens = []
    for i, turn in enumerate(history):
        if i:
            tokens.append(SEP)
        tokens.extend(turn)
    return tokens, vocab.encode(tokens)


def lexicon_encode(instance, params, embedding_table, vocab, dropout=None):
    """Token-level representations: embedding then per-stream FFN.

    Returns (history reps m x H, document reps n x H, history tokens,
    document tokens). `dropout` is an optional callable(shape) -> mask.
    """
    hist_tokens, hist_ids = flatten_history(instance.history, vocab)
    doc_tokens = instance.document.flat_tokens()
    if not doc_tokens:
        raise DomainError(f"instance {instance.instance_id}: empty document")
    hist_emb = ad.embedding_lookup(embedding_table, hist_ids)
    doc_emb = ad.embedding_lookup(embedding_table, vocab.encode(doc_tokens))
    if dropout is not None:
        hist_emb = ad.dropout(hist_emb, dropout(hist_emb.data.shape))
        doc_emb = ad.dropout(doc_emb, dropout(doc_emb.data.shape))
    return (layers.ffn_apply(params.ffn_history, hist_emb),
            layers.ffn_apply(params.ffn_document, doc_emb),
            hist_tokens, doc_tokens)


def contextual_encode(hist_lex, doc_lex, params, provider=None, instance_id=""):
    """Shared-BiLSTM contextual encoding of one or both streams.

    When a contextual-vector provider is enabled, its per-position vectors
    are concatenated to the lexicon representations before the BiLSTM.
    """
    def run(lex, stream):
        if provider is not None and provider.enabled:
            extra = provider.vectors_for(instance_id, stream, lex.data.shape[0])
            lex = ad.concat(lex, ad.as_tensor(extra), axis=1)
        return layers.bilstm_run(params.contextual, lex)

    hist_ctx = run(hist_lex, "history")
    doc_ctx = run(doc_lex, "doc") if doc_lex is not None else None
    return hist_ctx, doc_ctx


def cross_attend(doc_ctx, hist_ctx):
    """Each document row attends over history rows; returns the fused
    n x 2H matrix (document row ++ weighted history average) and the
    n x m attention weight matrix."""
    n = doc_ctx.data.shape[0]
    fused_rows, weight_rows = [], []
    for i in range(n):
        att = layers.dot_attention(ad.row(doc_ctx, i), hist_ctx)
        fused_rows.append(ad.concat(ad.row(doc_ctx, i), att.context))
        weight_rows.append(att.weights)
    return ad.stack_rows(fused_rows), ad.stack_rows(weight_rows)


def self_attend(fused, params):
    """Single-head dot-product self-attention over the fused rows; each
    output row is concat(input row, attention context) linearly projected
    back to width H."""
    n = fused.data.shape[0]
    out_rows, weight_rows = [], []
    for i in range(n):
        att = layers.dot_attention(ad.row(fused, i), fused)
        out_rows.append(ad.concat(ad.row(fused, i), att.context))
        weight_rows.append(att.weights)
    stacked = ad.stack_rows(out_rows)
    projected = ad.add(ad.matmul(stacked, params.self_proj_w), params.self_proj_b)
    return projected, ad.stack_rows(weight_rows)


def build_memory(hist_ctx, doc_ctx, params):
    """Memory construction: cross-attention fuse, self-attention, final
    BiLSTM rearrangement. Returns (memory n x H, cross weights, self
    weights)."""
    if doc_ctx is None or doc_ctx.data.shape[0] == 0:
        raise DomainError("build_memory requires a non-empty document context")
    if hist_ctx.data.shape[0] == 0:
        raise DomainError("build_memory requires a non-empty history context")
    fused, cross_w = cross_attend(doc_ctx, hist_ctx)
    mixed, self_w = self_attend(fused, params)
    memory = layers.bilstm_run(params.memory_bilstm, mixed)
    return memory, cross_w, self_w


def pool_history(hist_ctx, params):
    """Attention pooling with a learned query; returns (pooled H, weights)."""
    if hist_ctx.data.shape[0] == 0:
        raise DomainError("pool_history requires a non-empty history context")
    att = layers.dot_attention(params.pool_query, hist_ctx)
    return att.context, att.weights


def encode_instance(instance, params, embedding_table, vocab,
                    provider=None, dropout=None, include_document=True,
                    doc_read_counter=None):
    """Full encoder pass producing an EncoderMemory.

    With include_document False (history-only ablation) the document is
    never touched and the memory is a single zero row, so decoder attention
    contributes a zero context vector.
    """
    if include_document:
        hist_lex, doc_lex, _, doc_tokens = lexicon_encode(
            instance, params, embedding_table, vocab, dropout=dropout)
        if doc_read_counter is not None:
            doc_read_counter[0] += len(doc_tokens)
    else:
        hist_tokens, hist_ids = flatten_history(instance.history, vocab)
        hist_emb = ad.embedding_lookup(embedding_table, hist_ids)
        if dropout is not None:
            hist_emb = ad.dropout(hist_emb, dropout(hist_emb.data.shape))
        hist_lex = layers.ffn_apply(params.ffn_history, hist_emb)
        doc_lex, doc_tokens = None, []
    hist_ctx, doc_ctx = contextual_encode(
        hist_lex, doc_lex, params, provider, instance.instance_id)
    if include_document:
        memory, cross_w, self_w = build_memory(hist_ctx, doc_ctx, params)
    else:
        width = hist_ctx.data.shape[1]
        memory, cross_w, self_w = ad.as_tensor(np.zeros((1, width))), None, None
    pooled, _ = pool_history(hist_ctx, params)
    return EncoderMemory(memory=memory, history_contextual=hist_ctx,
                         history_pooled=pooled, doc_tokens=doc_tokens,
                         cross_weights=cross_w, self_weights=self_w)
