"""Automatic evaluation: relevance (corpus BLEU-4, NIST, an exact-match
METEOR variant), diversity (entropy-n, distinct-n over all system outputs),
and grounding precision/recall/F1 against the source document.

Grounding matches are counted over token *types*, not occurrences, so
repeating a copied word cannot inflate precision; the same type-level
denominators keep precision * |hyp| == recall * |doc| == #match exact.
The METEOR variant uses exact matches only (no stemming or synonymy).
Entropy uses the natural logarithm.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass
from importlib import resources

from .autodiff import DomainError
from .textdata import RESERVED_TOKENS

ENTROPY_BASE = "e"


def load_stopwords():
    """The fixed English stopword list shipped with the package."""
    text = resources.files("readgen.data").joinpath("stopwords.txt").read_text()
    return StopwordList(tokens=frozenset(text.split()), source="builtin-english",
                        digest=hashlib.sha256(text.encode()).hexdigest())


@dataclass(frozen=True)
class StopwordList:
    tokens: frozenset
    source: str
    digest: str

    def __contains__(self, token):
        return token in self.tokens


def ngrams(tokens, n):
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def bleu4(hypotheses, reference_sets, max_n=4):
    """Corpus-level BLEU: clipped modified n-gram precision for n=1..4,
    geometric mean, brevity penalty with closest-reference length."""
    if not hypotheses or len(hypotheses) != len(reference_sets):
        raise DomainError("bleu4 needs aligned, non-empty corpora")
    matched = [0] * max_n
    total = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for hyp, refs in zip(hypotheses, reference_sets):
        hyp_len += len(hyp)
        ref_len += min((len(r) for r in refs),
                       key=lambda L: (abs(L - len(hyp)), L))
        for n in range(1, max_n + 1):
            counts = Counter(ngrams(hyp, n))
            clip = Counter()
            for ref in refs:
                ref_counts = Counter(ngrams(ref, n))
                for g in counts:
                    clip[g] = max(clip[g], ref_counts.get(g, 0))
            matched[n - 1] += sum(min(c, clip[g]) for g, c in counts.items())
            total[n - 1] += sum(counts.values())
    if any(m == 0 for m in matched) or any(t == 0 for t in total):
        return 0.0
    log_prec = sum(math.log(m / t) for m, t in zip(matched, total)) / max_n
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / max(hyp_len, 1))
    return bp * math.exp(log_prec)


def _nist_info(reference_sets, max_n):
    """Information weights from reference n-gram statistics:
    info(w1..wn) = log2(count(w1..w_{n-1}) / count(w1..wn)), with the
    (n-1)-gram count replaced by the reference corpus token total for n=1."""
    counts = [Counter() for _ in range(max_n + 1)]
    for refs in reference_sets:
        for ref in refs:
            counts[0][()] += len(ref)
            for n in range(1, max_n + 1):
                counts[n].update(ngrams(ref, n))

    def info(gram):
        n = len(gram)
        denom = counts[n].get(gram, 0)
        numer = counts[0][()] if n == 1 else counts[n - 1].get(gram[:-1], 0)
        if denom == 0 or numer == 0 or numer < denom:
            return 0.0
        return math.log2(numer / denom)

    return info


def nist(hypotheses, reference_sets, max_n=5):
    """Corpus-level NIST (2002 definition): information-weighted n-gram
    matches for n=1..5 plus the NIST brevity factor."""
    if not hypotheses or len(hypotheses) != len(reference_sets):
        raise DomainError("nist needs aligned, non-empty corpora")
    info = _nist_info(reference_sets, max_n)
    gained = [0.0] * max_n
    total = [0] * max_n
    hyp_len = 0
    ref_len_sum = 0.0
    for hyp, refs in zip(hypotheses, reference_sets):
        hyp_len += len(hyp)
        ref_len_sum += sum(len(r) for r in refs) / len(refs)
        for n in range(1, max_n + 1):
            counts = Counter(ngrams(hyp, n))
            total[n - 1] += sum(counts.values())
            clip = Counter()
            for ref in refs:
                ref_counts = Counter(ngrams(ref, n))
                for g in counts:
                    clip[g] = max(clip[g], ref_counts.get(g, 0))
            for g, c in counts.items():
                gained[n - 1] += info(g) * min(c, clip[g])
    score = sum(g / t for g, t in zip(gained, total) if t > 0)
    # brevity factor: 0.5 when the length ratio is 2/3
    beta = math.log(0.5) / math.log(1.5) ** 2
    ratio = min(1.0, hyp_len / ref_len_sum) if ref_len_sum > 0 else 0.0
    if ratio <= 0.0:
        return 0.0
    bp = math.exp(beta * math.log(ratio) ** 2)
    return score * bp


def _meteor_single(hypothesis, reference, alpha, beta, gamma):
    """Leftmost maximal exact unigram alignment, F-mean, chunk penalty."""
    used = [False] * len(reference)
    alignment = []  # (hyp index, ref index)
    for i, tok in enumerate(hypothesis):
        for j, ref_tok in enumerate(reference):
            if not used[j] and ref_tok == tok:
                used[j] = True
                alignment.append((i, j))
                break
    matches = len(alignment)
    if matches == 0:
        return 0.0
    precision = matches / len(hypothesis)
    recall = matches / len(reference)
    fmean = precision * recall / (alpha * precision + (1 - alpha) * recall)
    chunks = 1
    for (i0, j0), (i1, j1) in zip(alignment, alignment[1:]):
        if i1 != i0 + 1 or j1 != j0 + 1:
            chunks += 1
    penalty = gamma * (chunks / matches) ** beta
    return fmean * (1.0 - penalty)


def meteor_variant(hypothesis, references, alpha=0.9, beta=3.0, gamma=0.5):
    """Best exact-match METEOR score over the reference list."""
    if not hypothesis:
        raise DomainError("meteor needs a non-empty hypothesis")
    if not references:
        raise DomainError("meteor needs at least one reference")
    return max(_meteor_single(hypothesis, ref, alpha, beta, gamma)
               for ref in references)


def diversity(outputs, n):
    """(entropy-n, distinct-n, degenerate flag) over all system outputs.

    Entropy is the Shannon entropy of the n-gram count distribution in
    nats; distinct-n is types / total. A corpus with no n-grams at all is
    reported as (0, 0, True).
    """
    if not outputs:
        raise DomainError("diversity needs a non-empty output list")
    counts = Counter()
    for out in outputs:
        counts.update(ngrams(out, n))
    total = sum(counts.values())
    if total == 0:
        return 0.0, 0.0, True
    entropy = -sum((c / total) * math.log(c / total) for c in counts.values())
    return entropy, len(counts) / total, False


def grounding(hypothesis, document, context, stopwords):
    """Type-level grounding scores.

    #match counts distinct non-stopword hypothesis tokens that occur in the
    document but not in the conversation context. Precision and recall
    divide by the distinct non-stopword token counts of the hypothesis and
    document respectively.
    """
    tags = set(RESERVED_TOKENS)
    hyp_content = {t for t in hypothesis if t not in stopwords and t not in tags}
    doc_content = {t for t in document.content_tokens()
                   if t not in stopwords and t not in tags}
    context = set(context)
    match = {t for t in hyp_content if t in doc_content and t not in context}
    n_match = len(match)
    precision = n_match / len(hyp_content) if hyp_content else 0.0
    recall = n_match / len(doc_content) if doc_content else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall > 0 else 0.0)
    return {
        "match": n_match,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "hyp_content": len(hyp_content),
        "doc_content": len(doc_content),
        "empty_hypothesis": not hyp_content,
    }


def evaluate_corpus(instances, outputs, stopwords=None, config=None):
    """Full metric report: per-instance rows plus corpus aggregates.

    `outputs` maps instance id -> hypothesis token list; every instance id
    must be present. Instances without explicit references are evaluated
    against their gold response.
    """
    stopwords = stopwords or load_stopwords()
    missing = [i.instance_id for i in instances if i.instance_id not in outputs]
    extra = sorted(set(outputs) - {i.instance_id for i in instances})
    if missing or extra:
        raise DomainError(
            f"instance/output misalignment: missing={missing[:5]}, "
            f"unmatched={extra[:5]}")
    hyps, ref_sets, rows = [], [], []
    match_sum = hyp_content_sum = doc_content_sum = 0
    for inst in instances:
        hyp = outputs[inst.instance_id]
        refs = inst.references if inst.references else [inst.response]
        hyps.append(hyp)
        ref_sets.append(refs)
        g = grounding(hyp, inst.document, inst.context_tokens(), stopwords)
        match_sum += g["match"]
        hyp_content_sum += g["hyp_content"]
        doc_content_sum += g["doc_content"]
        rows.append({
            "id": inst.instance_id,
            "length": len(hyp),
            "meteor": meteor_variant(hyp, refs) if hyp else 0.0,
            "grounding_match": g["match"],
            "grounding_precision": g["precision"],
            "grounding_recall": g["recall"],
            "grounding_f1": g["f1"],
        })
    g_precision = match_sum / hyp_content_sum if hyp_content_sum else 0.0
    g_recall = match_sum / doc_content_sum if doc_content_sum else 0.0
    g_f1 = (2 * g_precision * g_recall / (g_precision + g_recall)
            if g_precision + g_recall > 0 else 0.0)
    aggregate = {
        "nist": nist(hyps, ref_sets),
        "bleu4": bleu4(hyps, ref_sets),
        "meteor": sum(r["meteor"] for r in rows) / len(rows),
        "grounding_precision": g_precision,
        "grounding_recall": g_recall,
        "grounding_f1": g_f1,
        "mean_length": sum(len(h) for h in hyps) / len(hyps),
    }
    for n in range(1, 5):
        entropy, distinct, flagged = diversity(hyps, n)
        aggregate[f"entropy_{n}"] = entropy
        if n <= 2:
            aggregate[f"distinct_{n}"] = distinct
        if flagged:
            aggregate.setdefault("degenerate_ngrams", []).append(n)
    report = {
        "aggregate": aggregate,
        "per_instance": rows,
        "metadata": {
            "entropy_base": ENTROPY_BASE,
            "stopword_source": stopwords.source,
            "stopword_sha256": stopwords.digest,
            "grounding_counting": "token types",
            "meteor_matching": "exact only",
            "config_sha256": hashlib.sha256(
                json.dumps(config or {}, sort_keys=True).encode()).hexdigest(),
        },
    }
    return report


def paired_bootstrap(scores_a, scores_b, replicates=10000, seed=0):
    """Paired bootstrap significance test on per-instance score lists.

    Returns the two-sided p-value for the mean difference and the observed
    means. Mirrors the usual 10,000-replicate resampling procedure.
    """
    import numpy as np

    a = np.asarray(scores_a, dtype=float)
    b = np.asarray(scores_b, dtype=float)
    if a.shape != b.shape or a.size == 0:
        raise DomainError("paired_bootstrap needs equal-length score lists")
    rng = np.random.default_rng(seed)
    observed = a.mean() - b.mean()
    n = a.size
    idx = rng.integers(0, n, size=(replicates, n))
    diffs = a[idx].mean(axis=1) - b[idx].mean(axis=1)
    if observed == 0.0:
        p_value = 1.0
    else:
        # fraction of replicates where the sign of the difference flips
        p_value = float(2.0 * min((diffs <= 0).mean(), (diffs >= 0).mean()))
        p_value = min(1.0, p_value)
    return {"mean_a": float(a.mean()), "mean_b": float(b.mean()),
            "difference": float(observed), "p_value": p_value,
            "replicates": replicates}
