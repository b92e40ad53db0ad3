"""Text pipeline: tokenization, vocabulary, the grounded-corpus JSON-lines
format with structural tag and anchor retention, multi-reference test set
construction, and a synthetic corpus generator for desk-scale experiments.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .autodiff import DomainError, Tensor

MAX_TURN_TOKENS = 30
MAX_RESPONSE_TOKENS = 30
MAX_DOC_TOKENS = 500

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<bos>", "<eos>"

STRUCTURAL_TAGS = ("title", "h1", "h2", "h3", "h4", "h5", "h6", "p")
TAG_NONE = "none"
ANCHOR_OPEN = "anchor-open"
ANCHOR_CLOSE = "anchor-close"
VALID_TAGS = set(STRUCTURAL_TAGS) | {TAG_NONE, ANCHOR_OPEN, ANCHOR_CLOSE}

SEP = "<sep>"  # separator between flattened history turns
TAG_TOKENS = tuple(
    [f"<{t}>" for t in STRUCTURAL_TAGS] + [f"</{t}>" for t in STRUCTURAL_TAGS]
    + ["<anchor>", "</anchor>", SEP])
RESERVED_TOKENS = (PAD, UNK, BOS, EOS) + TAG_TOKENS
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3


class CorpusFormatError(ValueError):
    """Schema or JSON violation in a corpus file, with the line number."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


_TOKEN_RE = re.compile(r"[a-z0-9']+|[^\sa-z0-9']")


def tokenize(text):
    """Lowercase, split punctuation into separate tokens, whitespace-split.

    Idempotent under join+retokenize: tokenize(" ".join(tokenize(s))) ==
    tokenize(s).
    """
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Document:
    """Ordered sentences with one structural marker per token.

    flat_tokens interleaves reserved tag tokens with the sentence tokens:
    a maximal run of a structural marker is wrapped in <tag>...</tag>, an
    anchor-open marker inserts <anchor> before its token and anchor-close
    inserts </anchor> after its token.
    """
    sentences: list  # list of token lists
    tags: list       # parallel list of per-token marker lists

    def __post_init__(self):
        if len(self.sentences) != len(self.tags):
            raise DomainError("document sentences and tags differ in length")
        for sent, tg in zip(self.sentences, self.tags):
            if len(sent) != len(tg):
                raise DomainError("per-token tags do not match sentence length")
            for t in tg:
                if t not in VALID_TAGS:
                    raise DomainError(f"unknown structural tag {t!r}")
        opens = sum(t == ANCHOR_OPEN for tg in self.tags for t in tg)
        closes = sum(t == ANCHOR_CLOSE for tg in self.tags for t in tg)
        depth = 0
        for tg in self.tags:
            for t in tg:
                if t == ANCHOR_OPEN:
                    depth += 1
                    if depth > 1:
                        raise DomainError("nested anchor markers")
                elif t == ANCHOR_CLOSE:
                    depth -= 1
                    if depth < 0:
                        raise DomainError("anchor close before open")
        if opens != closes or depth != 0:
            raise DomainError(f"unbalanced anchors: {opens} opens, {closes} closes")

    def flat_tokens(self, limit=MAX_DOC_TOKENS):
        out = []
        for sent, tg in zip(self.sentences, self.tags):
            current = None
            for tok, marker in zip(sent, tg):
                structural = marker if marker in STRUCTURAL_TAGS else None
                if structural != current:
                    if current is not None:
                        out.append(f"</{current}>")
                    if structural is not None:
                        out.append(f"<{structural}>")
                    current = structural
                if marker == ANCHOR_OPEN:
                    out.append("<anchor>")
                out.append(tok)
                if marker == ANCHOR_CLOSE:
                    out.append("</anchor>")
            if current is not None:
                out.append(f"</{current}>")
        return out[:limit] if limit else out

    def content_tokens(self):
        """Sentence tokens only, no tag tokens; used by metrics."""
        return [tok for sent in self.sentences for tok in sent]


@dataclass
class ConversationInstance:
    instance_id: str
    history: list           # list of turns, each a token list
    document: Document
    response: list          # token list
    references: list = field(default_factory=list)  # up to 5 extra golds

    def __post_init__(self):
        if not self.history:
            raise DomainError(f"instance {self.instance_id}: empty history")
        if not self.response:
            raise DomainError(f"instance {self.instance_id}: empty response")
        if len(self.references) > 5:
            raise DomainError(f"instance {self.instance_id}: more than 5 references")

    def context_tokens(self):
        """Union of all history turn tokens (grounding-metric context)."""
        return {tok for turn in self.history for tok in turn}


class Vocabulary:
    """token <-> id maps with fixed reserved ids 0..3 then tag tokens."""

    def __init__(self, tokens=()):
        self.id_to_token = list(RESERVED_TOKENS)
        seen = set(self.id_to_token)
        for tok in tokens:
            if tok not in seen:
                seen.add(tok)
                self.id_to_token.append(tok)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}

    def __len__(self):
        return len(self.id_to_token)

    @property
    def pad_id(self):
        return self.token_to_id[PAD]

    @property
    def unk_id(self):
        return self.token_to_id[UNK]

    @property
    def bos_id(self):
        return self.token_to_id[BOS]

    @property
    def eos_id(self):
        return self.token_to_id[EOS]

    @property
    def sep_id(self):
        return self.token_to_id[SEP]

    def encode(self, tokens):
        unk = self.unk_id
        return [self.token_to_id.get(t, unk) for t in tokens]

    def decode(self, ids):
        return [self.id_to_token[i] for i in ids]


def build_vocabulary(instances, min_count=1):
    """Frequency-thresholded vocabulary over all instance text.

    Ordering is deterministic: frequency descending, then lexicographic.
    """
    if min_count < 1:
        raise DomainError(f"min_count must be >= 1, got {min_count}")
    counts = {}
    reserved = set(RESERVED_TOKENS)

    def feed(tokens):
        for tok in tokens:
            if tok not in reserved:
                counts[tok] = counts.get(tok, 0) + 1

    for inst in instances:
        for turn in inst.history:
            feed(turn)
        feed(inst.document.flat_tokens())
        feed(inst.response)
        for ref in inst.references:
            feed(ref)
    kept = sorted((t for t, c in counts.items() if c >= min_count),
                  key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


def _parse_record(obj, line_no):
    for key in ("id", "history", "doc", "response"):
        if key not in obj:
            raise CorpusFormatError(line_no, f"missing required field {key!r}")
    doc = obj["doc"]
    if not isinstance(doc, dict) or "sentences" not in doc or "tags" not in doc:
        raise CorpusFormatError(line_no, "doc must contain 'sentences' and 'tags'")
    sentences = [tokenize(s) for s in doc["sentences"]]
    tags = doc["tags"]
    try:
        document = Document(sentences=sentences, tags=tags)
        history = [tokenize(t)[:MAX_TURN_TOKENS] for t in obj["history"]]
        response = tokenize(obj["response"])[:MAX_RESPONSE_TOKENS]
        refs = [tokenize(r)[:MAX_RESPONSE_TOKENS] for r in obj.get("refs", [])]
        return ConversationInstance(
            instance_id=str(obj["id"]), history=history, document=document,
            response=response, references=refs)
    except DomainError as exc:
        raise CorpusFormatError(line_no, str(exc)) from exc


def load_corpus(path):
    """Stream ConversationInstances from a UTF-8 JSON-lines corpus file."""
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(line_no, f"invalid JSON: {exc}") from exc
            yield _parse_record(obj, line_no)


def instance_to_record(inst):
    return {
        "id": inst.instance_id,
        "history": [" ".join(turn) for turn in inst.history],
        "doc": {
            "sentences": [" ".join(s) for s in inst.document.sentences],
            "tags": inst.document.tags,
        },
        "response": " ".join(inst.response),
        "refs": [" ".join(r) for r in inst.references],
    }


def write_corpus(instances, path):
    """Serialize instances in canonical form (fixed key order, one per line)."""
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_record(inst), ensure_ascii=False))
            fh.write("\n")


def make_multi_reference_testset(instances):
    """Build the multi-reference evaluation set.

    Instances sharing a (history, document) key form a group. Groups with
    fewer than 6 responses are dropped (count returned). In each kept group,
    responses are ordered by instance id: the smallest id is held out as the
    human response, the next 5 become references. Returns
    (eval_instances, human_outputs, dropped_count) where each eval instance
    carries the held-out human response in .response and the 5 references in
    .references, and human_outputs maps instance id -> human token list.
    """
    groups = {}
    for inst in instances:
        key = (tuple(tuple(t) for t in inst.history),
               tuple(tuple(s) for s in inst.document.sentences))
        groups.setdefault(key, []).append(inst)
    eval_set, human_outputs, dropped = [], {}, 0
    for key in sorted(groups, key=lambda k: min(i.instance_id for i in groups[k])):
        members = sorted(groups[key], key=lambda i: i.instance_id)
        if len(members) < 6:
            dropped += 1
            continue
        human, refs = members[0], members[1:6]
        eval_inst = ConversationInstance(
            instance_id=human.instance_id,
            history=human.history,
            document=human.document,
            response=human.response,
            references=[r.response for r in refs])
        eval_set.append(eval_inst)
        human_outputs[human.instance_id] = human.response
    return eval_set, human_outputs, dropped


@dataclass
class SyntheticConfig:
    num_instances: int = 64
    seed: int = 0
    grounding_rate: float = 1.0
    vocab_size: int = 60       # chatter word inventory
    num_facts: int = 40        # planted rare fact tokens
    turns_min: int = 1
    turns_max: int = 2
    turn_len_min: int = 3
    turn_len_max: int = 6
    doc_sentences_min: int = 2
    doc_sentences_max: int = 3
    sent_len_min: int = 3
    sent_len_max: int = 5
    response_len_min: int = 2
    response_len_max: int = 5
    split_chatter: bool = False  # disjoint chatter pools for history / doc


def generate_synthetic_corpus(config):
    """Deterministic synthetic grounded corpus.

    Documents carry planted rare fact tokens (e.g. "zqfact7x"); with
    probability grounding_rate the gold response copies one fact token that
    is absent from the history, so grounding metrics have unambiguous
    signal. Chatter words are drawn from a small closed inventory and
    non-grounded responses reuse only history words.
    """
    if not 0.0 <= config.grounding_rate <= 1.0:
        raise DomainError(f"grounding_rate must be in [0,1], "
                          f"got {config.grounding_rate}")
    if config.num_instances <= 0:
        raise DomainError("num_instances must be positive")
    rng = np.random.default_rng(config.seed)
    words = [f"w{i}" for i in range(config.vocab_size)]
    facts = [f"zqfact{i}x" for i in range(config.num_facts)]
    if config.split_chatter:
        # conversational chatter and document chatter never share tokens,
        # so response/document overlap comes from fact tokens alone
        talk_words, doc_words = words[:len(words) // 2], words[len(words) // 2:]
    else:
        talk_words = doc_words = words

    def chatter(lo, hi, pool):
        n = int(rng.integers(lo, hi + 1))
        return [pool[int(rng.integers(len(pool)))] for _ in range(n)]

    instances = []
    for idx in range(config.num_instances):
        history = [chatter(config.turn_len_min, config.turn_len_max,
                           talk_words)
                   for _ in range(int(rng.integers(config.turns_min,
                                                   config.turns_max + 1)))]
        history_words = {t for turn in history for t in turn}
        fact = facts[int(rng.integers(len(facts)))]
        sentences, tags = [], []
        n_sent = int(rng.integers(config.doc_sentences_min,
                                  config.doc_sentences_max + 1))
        fact_sentence = int(rng.integers(n_sent))
        for s in range(n_sent):
            sent = chatter(config.sent_len_min, config.sent_len_max,
                           doc_words)
            tag = "title" if s == 0 else "p"
            if s == fact_sentence:
                pos = int(rng.integers(len(sent)))
                sent = sent[:pos] + [fact] + sent[pos:]
            marker = [tag] * len(sent)
            if s == fact_sentence and pos + 1 < len(sent):
                # mark the fact with an anchor span (open on the fact token,
                # close on the next); needs a following token to close on
                marker[pos] = ANCHOR_OPEN
                marker[pos + 1] = ANCHOR_CLOSE
            sentences.append(sent)
            tags.append(marker)
        grounded = bool(rng.random() < config.grounding_rate)
        if grounded:
            base = chatter(config.response_len_min,
                           config.response_len_max, talk_words)
            pos = int(rng.integers(len(base) + 1))
            response = base[:pos] + [fact] + base[pos:]
        else:
            pool = sorted(history_words)
            n = int(rng.integers(config.response_len_min,
                                 config.response_len_max + 1))
            response = [pool[int(rng.integers(len(pool)))] for _ in range(n)]
        instances.append(ConversationInstance(
            instance_id=f"syn{idx:06d}",
            history=history,
            document=Document(sentences=sentences, tags=tags),
            response=response))
    return instances


class EmbeddingTable:
    """Word vectors for a vocabulary, optionally seeded from a text file of
    `token v1 ... vdim` lines; rows can be frozen per token."""

    def __init__(self, vocab, dim=300, rng=None, pretrained_path=None,
                 freeze_pretrained=False):
        self.vocab = vocab
        self.dim = dim
        rng = rng or np.random.default_rng(0)
        limit = np.sqrt(6.0 / (len(vocab) + dim))
        matrix = rng.uniform(-limit, limit, size=(len(vocab), dim))
        matrix[vocab.pad_id] = 0.0
        self.trainable = np.ones(len(vocab), dtype=bool)
        if pretrained_path is not None:
            for token, vec in iter_embedding_file(pretrained_path, dim):
                idx = vocab.token_to_id.get(token)
                if idx is not None:
                    matrix[idx] = vec
                    if freeze_pretrained:
                        self.trainable[idx] = False
        self.table = Tensor(matrix)


def iter_embedding_file(path, dim):
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise CorpusFormatError(
                    line_no, f"expected {dim} values, got {len(parts) - 1}")
            yield parts[0], np.array([float(v) for v in parts[1:]])


class ContextualVectorProvider:
    """Optional per-position contextual vectors (600-dim when enabled).

    File-backed mode reads lines of `instance_id stream position v1..v600`
    with stream in {history, doc}. Disabled mode contributes zero width.
    """

    def __init__(self, path=None, dim=600):
        self.dim = dim if path is not None else 0
        self._vectors = {}
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    parts = line.split()
                    if not parts:
                        continue
                    if len(parts) != dim + 3:
                        raise CorpusFormatError(
                            line_no, f"expected {dim + 3} fields, got {len(parts)}")
                    key = (parts[0], parts[1], int(parts[2]))
                    self._vectors[key] = np.array([float(v) for v in parts[3:]])

    @property
    def enabled(self):
        return self.dim > 0

    def vectors_for(self, instance_id, stream, length):
        """An (length x dim) block; zero-width when disabled."""
        if not self.enabled:
            return np.zeros((length, 0))
        out = np.zeros((length, self.dim))
        for pos in range(length):
            vec = self._vectors.get((instance_id, stream, pos))
            if vec is None:
                raise DomainError(
                    f"missing contextual vector for {instance_id}/{stream}/{pos}")
            out[pos] = vec
        return out
