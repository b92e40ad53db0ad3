"""Peek inside the document reader: cross-attention from document tokens
over the history, and the decoder's per-step attention over the memory.

    python3 demos/02_attention_inspection.py
"""

import numpy as np

from readgen.decoder import GenerationConfig
from readgen.textdata import (SyntheticConfig, build_vocabulary,
                              generate_synthetic_corpus)
from readgen.training import Model, TrainConfig

corpus = generate_synthetic_corpus(
    SyntheticConfig(num_instances=8, seed=3, grounding_rate=1.0))
vocab = build_vocabulary(corpus)
model = Model(TrainConfig(hidden_size=16, embedding_dim=16,
                          dropout_rate=0.0, seed=1), vocab)

inst = corpus[0]
memory = model.encode(inst)
print("document rows in memory:", memory.memory.data.shape)
print("cross-attention shape (doc x history):",
      memory.cross_weights.data.shape)
row_sums = memory.cross_weights.data.sum(axis=1)
print("every attention row sums to one:",
      bool(np.allclose(row_sums, 1.0, atol=1e-9)))

tokens, attn, _ = model.generate(
    inst, GenerationConfig(k=1, max_length=8), greedy=True)
print()
print("greedy output (untrained, so noise):", " ".join(tokens) or "<eos>")
doc = memory.doc_tokens
for step, row in enumerate(attn):
    top = int(np.argmax(row))
    print(f"step {step}: strongest document token "
          f"{doc[top]!r} (weight {row[top]:.3f})")
