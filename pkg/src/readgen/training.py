"""Training: system variants (seq2seq, cmr-f, cmr, cmr+w), the per-batch
data-weighting scheme driven by document/response closeness, Adam updates,
and resumable checkpointing.

The cmr+w variant weights each instance's loss by its normalized closeness
score within the batch; cmr uses the identical architecture with uniform
weights, cmr-f drops the document-reading path, and seq2seq is a plain
attentional encoder-decoder over the history alone.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import decoder as dec
from . import encoder as enc
from . import layers
from .autodiff import DomainError, Tensor
from .decoder import GenerationConfig
from .metrics import ngrams
from .textdata import EmbeddingTable, build_vocabulary

VARIANTS = ("seq2seq", "cmr-f", "cmr", "cmr+w")
CLOSENESS_METRICS = ("bleu-2", "nist-like")


@dataclass
class TrainConfig:
    learning_rate: float = 0.0005
    batch_size: int = 32
    dropout_rate: float = 0.4
    hidden_size: int = 512
    embedding_dim: int = 300
    variant: str = "cmr"
    closeness_metric: str = "bleu-2"
    epochs: int = 1
    seed: int = 0
    tau: float = 1.0
    top_k: int = 20
    max_generate: int = 30
    tie_embeddings: bool = False
    grad_clip: float | None = None
    min_count: int = 1
    validation_fraction: float = 0.1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DomainError(f"unknown variant {self.variant!r}; "
                              f"expected one of {VARIANTS}")
        if self.closeness_metric not in CLOSENESS_METRICS:
            raise DomainError(f"unknown closeness metric "
                              f"{self.closeness_metric!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise DomainError("dropout_rate must be in [0, 1)")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise DomainError("invalid learning rate / batch size / epochs")


@dataclass
class WeightedBatch:
    instances: list
    closeness: list
    weights: list


def closeness_score(document, response, metric="bleu-2"):
    """n-gram overlap between the document flat tokens and a response.

    bleu-2: geometric mean of unigram precision (unsmoothed, so a fully
    disjoint response scores 0) and add-one smoothed bigram precision; no
    brevity penalty since the document is not length-comparable.
    nist-like: document-internal information weights over matched unigrams
    and bigrams, normalized by response n-gram counts.
    """
    doc_tokens = document.flat_tokens()
    if not doc_tokens or not response:
        raise DomainError("closeness_score needs non-empty document/response")
    if metric == "bleu-2":
        p = []
        for n, smooth in ((1, 0), (2, 1)):
            hyp_counts = Counter(ngrams(response, n))
            ref_counts = Counter(ngrams(doc_tokens, n))
            m = sum(min(c, ref_counts.get(g, 0)) for g, c in hyp_counts.items())
            t = sum(hyp_counts.values())
            if t == 0:
                continue
            if smooth:
                p.append((m + 1) / (t + 1))
            else:
                if m == 0:
                    return 0.0
                p.append(m / t)
        return math.exp(sum(math.log(x) for x in p) / len(p))
    # nist-like
    total = len(doc_tokens)
    uni = Counter(ngrams(doc_tokens, 1))
    bi = Counter(ngrams(doc_tokens, 2))
    score = 0.0
    for n, table in ((1, uni), (2, bi)):
        hyp_counts = Counter(ngrams(response, n))
        t = sum(hyp_counts.values())
        if t == 0:
            continue
        gained = 0.0
        for g, c in hyp_counts.items():
            ref_c = table.get(g, 0)
            if ref_c == 0:
                continue
            parent = total if n == 1 else uni.get(g[:-1], ref_c)
            gained += math.log2(max(parent, ref_c) / ref_c) * min(c, ref_c)
        score += gained / t
    return score


def normalize_weights(closeness):
    """Closeness values -> weights summing to 1; uniform fallback when every
    value is zero."""
    if not closeness:
        raise DomainError("normalize_weights of an empty list")
    if any(c < 0 for c in closeness):
        raise DomainError("closeness values must be non-negative")
    total = sum(closeness)
    if total == 0.0:
        return [1.0 / len(closeness)] * len(closeness)
    return [c / total for c in closeness]


def weight_batch(instances, metric="bleu-2"):
    """Normalized per-instance closeness weights for one batch."""
    if not instances:
        raise DomainError("weight_batch needs a non-empty batch")
    closeness = [closeness_score(i.document, i.response, metric)
                 for i in instances]
    return WeightedBatch(instances=list(instances), closeness=closeness,
                         weights=normalize_weights(closeness))


class Model:
    """One variant's full parameter set and forward passes."""

    def __init__(self, config, vocab, provider=None, pretrained_path=None):
        self.config = config
        self.vocab = vocab
        self.provider = provider
        self.doc_token_reads = 0
        rng = np.random.default_rng(config.seed)
        cove = provider.dim if provider is not None else 0
        e, h = config.embedding_dim, config.hidden_size
        if h % 2:
            raise DomainError(f"hidden_size must be even, got {h}")
        self.embedding = EmbeddingTable(vocab, dim=e, rng=rng,
                                        pretrained_path=pretrained_path)
        if config.variant == "seq2seq":
            self.encoder = None
            self.s2s_bilstm = layers.init_bilstm(rng, e, h // 2)
            self.s2s_pool_query = layers.glorot(rng, h, 1, shape=(h,))
        else:
            self.encoder = enc.init_encoder(rng, e, h, cove_dim=cove)
            self.s2s_bilstm = None
            self.s2s_pool_query = None
        tied = self.embedding.table if config.tie_embeddings else None
        self.decoder = dec.init_decoder(rng, e, h, len(vocab),
                                        tied_embedding=tied)

    @property
    def reads_documents(self):
        return self.config.variant in ("cmr", "cmr+w")

    def parameters(self):
        """Named parameter tensors in a fixed, deterministic order."""
        out = {"embedding": self.embedding.table}
        if self.encoder is not None:
            p = self.encoder
            groups = [("enc.ffn_hist", p.ffn_history),
                      ("enc.ffn_doc", p.ffn_document),
                      ("enc.ctx", p.contextual),
                      ("enc.mem", p.memory_bilstm)]
            for prefix, group in groups:
                for i, t in enumerate(layers.params_list(group)):
                    out[f"{prefix}.{i}"] = t
            out["enc.self_w"] = p.self_proj_w
            out["enc.self_b"] = p.self_proj_b
            out["enc.pool_q"] = p.pool_query
        else:
            for i, t in enumerate(layers.params_list(self.s2s_bilstm)):
                out[f"s2s.bilstm.{i}"] = t
            out["s2s.pool_q"] = self.s2s_pool_query
        d = self.decoder
        for i, t in enumerate(layers.params_list(d.gru)):
            out[f"dec.gru.{i}"] = t
        out["dec.w2"] = d.w2
        out["dec.w1"] = d.w1
        out["dec.b"] = d.b
        out["dec.h0"] = d.h0_proj
        if not self.config.tie_embeddings:
            out["dec.out_emb"] = d.out_embedding
        return out

    def parameter_count(self):
        return sum(t.data.size for t in self.parameters().values())

    def zero_grads(self):
        for t in self.parameters().values():
            t.zero_grad()

    def _dropout_fn(self, rng):
        rate = self.config.dropout_rate
        if rng is None or rate == 0.0:
            return None

        def draw(shape):
            return (rng.random(shape) >= rate) / (1.0 - rate)

        return draw

    def encode(self, instance, dropout_rng=None):
        dropout = self._dropout_fn(dropout_rng)
        if self.config.variant == "seq2seq":
            _, hist_ids = enc.flatten_history(instance.history, self.vocab)
            emb = ad.embedding_lookup(self.embedding.table, hist_ids)
            if dropout is not None:
                emb = ad.dropout(emb, dropout(emb.data.shape))
            ctx = layers.bilstm_run(self.s2s_bilstm, emb)
            att = layers.dot_attention(self.s2s_pool_query, ctx)
            return enc.EncoderMemory(memory=ctx, history_contextual=ctx,
                                     history_pooled=att.context, doc_tokens=[])
        counter = [0]
        memory = enc.encode_instance(
            instance, self.encoder, self.embedding.table, self.vocab,
            provider=self.provider, dropout=dropout,
            include_document=self.reads_documents, doc_read_counter=counter)
        self.doc_token_reads += counter[0]
        return memory

    def instance_loss(self, instance, dropout_rng=None):
        memory = self.encode(instance, dropout_rng=dropout_rng)
        gen_cfg = GenerationConfig(tau=self.config.tau, k=self.config.top_k,
                                   max_length=self.config.max_generate)
        loss, _ = dec.teacher_forced_loss(
            self.vocab.encode(instance.response), memory, self.decoder,
            gen_cfg, self.vocab.eos_id,
            dropout=self._dropout_fn(dropout_rng))
        return loss

    def generate(self, instance, gen_config=None, rng=None, greedy=False):
        memory = self.encode(instance)
        cfg = gen_config or GenerationConfig(
            tau=self.config.tau, k=self.config.top_k,
            max_length=self.config.max_generate)
        tokens, attn = dec.generate(memory, self.decoder, cfg, self.vocab,
                                    rng=rng, greedy=greedy)
        return tokens, attn, memory


class Adam:
    """Adam with the standard moment defaults (b1=0.9, b2=0.999, eps=1e-8)."""

    def __init__(self, params, lr=0.0005, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params  # name -> Tensor
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.t = 0

    def step(self, grad_clip=None):
        self.t += 1
        if grad_clip is not None:
            norm = math.sqrt(sum(float((p.grad ** 2).sum())
                                 for p in self.params.values()))
            if norm > grad_clip:
                for p in self.params.values():
                    p.grad = p.grad * (grad_clip / norm)
        for k, p in self.params.items():
            g = p.grad
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            m_hat = self.m[k] / (1 - self.beta1 ** self.t)
            v_hat = self.v[k] / (1 - self.beta2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()


def train_step(model, batch, optimizer, dropout_rng=None):
    """One weighted update. Batch loss is the weight-mixed sum for cmr+w and
    the plain mean otherwise; uniform weights make the two identical."""
    losses = []
    for inst in batch.instances:
        loss = model.instance_loss(inst, dropout_rng=dropout_rng)
        if not np.isfinite(loss.data):
            raise RuntimeError(
                f"non-finite loss on instance {inst.instance_id}")
        losses.append(loss)
    if model.config.variant == "cmr+w":
        total = ad.scale(losses[0], batch.weights[0])
        for w, l in zip(batch.weights[1:], losses[1:]):
            total = ad.add(total, ad.scale(l, w))
    else:
        total = ad.mean_scalars(losses)
    optimizer.zero_grad()
    ad.backward(total)
    if not model.embedding.trainable.all():
        # frozen pretrained rows never move
        model.embedding.table.grad[~model.embedding.trainable] = 0.0
    optimizer.step(grad_clip=model.config.grad_clip)
    return float(total.data)


def make_batches(instances, batch_size, rng):
    order = rng.permutation(len(instances))
    return [[instances[j] for j in order[i:i + batch_size]]
            for i in range(0, len(order), batch_size)]


def validation_loss(model, instances):
    """Mean per-token NLL with dropout off; touches no parameters."""
    if not instances:
        return float("nan")
    return float(np.mean([float(model.instance_loss(i).data)
                          for i in instances]))


@dataclass
class TrainResult:
    model: "Model"
    curve: list = field(default_factory=list)  # (step, train_loss, val_loss)
    best_val: float = float("inf")
    steps: int = 0


def run_training(train_instances, config, vocab=None, val_instances=None,
                 provider=None, pretrained_path=None,
                 checkpoint_path=None, resume_from=None, log=None):
    """Full training loop over shuffled epochs with seeded reproducibility.

    Validation runs after each epoch; the checkpoint with the lowest
    validation NLL is retained when checkpoint_path is given. Returns a
    TrainResult with the loss curve.
    """
    if vocab is None:
        vocab = build_vocabulary(train_instances, min_count=config.min_count)
    if val_instances is None and config.validation_fraction > 0:
        n_val = max(1, int(len(train_instances) * config.validation_fraction))
        val_instances = train_instances[-n_val:]
        train_instances = train_instances[:-n_val] or val_instances
    val_instances = val_instances or []

    if resume_from is not None:
        model, optimizer, state = load_checkpoint(resume_from, provider=provider)
        rng = np.random.default_rng()
        rng.bit_generator.state = state["rng_state"]
        start_epoch = state["epoch"]
        steps = state["step"]
        best_val = state["best_val"]
    else:
        model = Model(config, vocab, provider=provider,
                      pretrained_path=pretrained_path)
        optimizer = Adam(model.parameters(), lr=config.learning_rate)
        rng = np.random.default_rng(config.seed + 1)
        start_epoch, steps, best_val = 0, 0, float("inf")

    result = TrainResult(model=model, best_val=best_val, steps=steps)
    for epoch in range(start_epoch, config.epochs):
        for batch_insts in make_batches(train_instances, config.batch_size, rng):
            batch = weight_batch(batch_insts, config.closeness_metric)
            loss = train_step(model, batch, optimizer, dropout_rng=rng)
            result.steps += 1
            result.curve.append((result.steps, loss, None))
        val = validation_loss(model, val_instances) if val_instances else None
        if result.curve and val is not None:
            step, train_loss, _ = result.curve[-1]
            result.curve[-1] = (step, train_loss, val)
        if log:
            val_txt = "-" if val is None else f"{val:.4f}"
            log(f"epoch {epoch + 1}/{config.epochs}: "
                f"train {result.curve[-1][1]:.4f} val {val_txt}")
        if checkpoint_path is not None and (val is None
                                            or val <= result.best_val):
            if val is not None:
                result.best_val = val
            save_checkpoint(checkpoint_path, model, optimizer,
                            epoch=epoch + 1, step=result.steps,
                            best_val=result.best_val, rng=rng)
    return result


CHECKPOINT_VERSION = 1


def save_checkpoint(path, model, optimizer, epoch=0, step=0,
                    best_val=float("inf"), rng=None):
    """Single-file .npz container: named parameter tensors, Adam moments,
    config snapshot, counters, and RNG state (bit-exact restore)."""
    arrays = {}
    for name, tensor in model.parameters().items():
        arrays[f"param/{name}"] = tensor.data
        arrays[f"adam_m/{name}"] = optimizer.m[name]
        arrays[f"adam_v/{name}"] = optimizer.v[name]
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "vocab": model.vocab.id_to_token,
        "trainable": model.embedding.trainable.tolist(),
        "adam_t": optimizer.t,
        "adam_lr": optimizer.lr,
        "epoch": epoch,
        "step": step,
        "best_val": best_val,
        "rng_state": rng.bit_generator.state if rng is not None else None,
    }
    arrays["meta_json"] = np.frombuffer(
        json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path, provider=None):
    """Rebuild (model, optimizer, state) from save_checkpoint output.

    Reloaded parameters are bit-identical to the saved float64 tensors.
    """
    from .textdata import Vocabulary, RESERVED_TOKENS

    with np.load(path) as data:
        meta = json.loads(bytes(data["meta_json"]).decode("utf-8"))
        if meta["version"] != CHECKPOINT_VERSION:
            raise DomainError(f"unsupported checkpoint version "
                              f"{meta['version']}")
        config = TrainConfig(**meta["config"])
        vocab = Vocabulary(meta["vocab"][len(RESERVED_TOKENS):])
        model = Model(config, vocab, provider=provider)
        optimizer = Adam(model.parameters(), lr=meta["adam_lr"])
        optimizer.t = meta["adam_t"]
        model.embedding.trainable = np.array(meta["trainable"], dtype=bool)
        for name, tensor in model.parameters().items():
            tensor.data[...] = data[f"param/{name}"]
            optimizer.m[name] = data[f"adam_m/{name}"].copy()
            optimizer.v[name] = data[f"adam_v/{name}"].copy()
    state = {"epoch": meta["epoch"], "step": meta["step"],
             "best_val": meta["best_val"], "rng_state": meta["rng_state"]}
    return model, optimizer, state


def write_loss_curve(curve, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,train_loss,val_loss\n")
        for step, train_loss, val_loss in curve:
            val = "" if val_loss is None else f"{val_loss!r}"
            fh.write(f"{step},{train_loss!r},{val}\n")
