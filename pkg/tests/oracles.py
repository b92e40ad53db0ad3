"""Independent reference scorers used only to produce and audit the frozen
golden metric values in data/golden_metrics.json.

These are written directly from the published metric definitions (BLEU:
Papineni et al. 2002; NIST: Doddington 2002; METEOR: Lavie & Agarwal 2007
with exact matching only) with deliberately different code structure from
the package implementations: plain dict loops, no shared helpers. Run
`python3 tests/oracles.py` to regenerate the golden file; provenance notes
are embedded in it.

Preferred third-party scorers (nltk, sacrebleu) are not available on this
machine's package mirror, so these hand-audited implementations serve as
the independent route.
"""

import json
import math
import os


def _count_ngrams(tokens, n):
    table = {}
    for i in range(len(tokens) - n + 1):
        key = " ".join(tokens[i:i + n])
        table[key] = table.get(key, 0) + 1
    return table


def oracle_bleu4(corpus):
    """corpus: list of {"hyp": [...], "refs": [[...], ...]}."""
    numerators = {1: 0, 2: 0, 3: 0, 4: 0}
    denominators = {1: 0, 2: 0, 3: 0, 4: 0}
    hyp_length = 0
    eff_ref_length = 0
    for item in corpus:
        hyp = item["hyp"]
        refs = item["refs"]
        hyp_length += len(hyp)
        best = None
        for ref in refs:
            key = (abs(len(ref) - len(hyp)), len(ref))
            if best is None or key < best:
                best = key
        eff_ref_length += best[1]
        for n in (1, 2, 3, 4):
            hyp_counts = _count_ngrams(hyp, n)
            for gram, count in hyp_counts.items():
                max_ref = 0
                for ref in refs:
                    c = _count_ngrams(ref, n).get(gram, 0)
                    if c > max_ref:
                        max_ref = c
                numerators[n] += min(count, max_ref)
                denominators[n] += count
    for n in (1, 2, 3, 4):
        if numerators[n] == 0:
            return 0.0
    geo = 1.0
    for n in (1, 2, 3, 4):
        geo *= (numerators[n] / denominators[n]) ** 0.25
    if hyp_length > eff_ref_length:
        brevity = 1.0
    else:
        brevity = math.exp(1.0 - eff_ref_length / hyp_length)
    return brevity * geo


def oracle_nist(corpus, max_n=5):
    # reference-corpus n-gram statistics for the information weights
    ref_ngram_counts = [{} for _ in range(max_n + 1)]
    total_ref_words = 0
    for item in corpus:
        for ref in item["refs"]:
            total_ref_words += len(ref)
            for n in range(1, max_n + 1):
                for gram, c in _count_ngrams(ref, n).items():
                    ref_ngram_counts[n][gram] = ref_ngram_counts[n].get(gram, 0) + c

    def information(gram_key, n):
        count_n = ref_ngram_counts[n].get(gram_key, 0)
        if n == 1:
            count_parent = total_ref_words
        else:
            parent = " ".join(gram_key.split(" ")[:-1])
            count_parent = ref_ngram_counts[n - 1].get(parent, 0)
        if count_n == 0 or count_parent == 0 or count_parent < count_n:
            return 0.0
        return math.log(count_parent / count_n, 2)

    gained = {n: 0.0 for n in range(1, max_n + 1)}
    attempted = {n: 0 for n in range(1, max_n + 1)}
    sys_length = 0
    mean_ref_length = 0.0
    for item in corpus:
        hyp = item["hyp"]
        refs = item["refs"]
        sys_length += len(hyp)
        mean_ref_length += sum(len(r) for r in refs) / len(refs)
        for n in range(1, max_n + 1):
            for gram, count in _count_ngrams(hyp, n).items():
                attempted[n] += count
                max_ref = 0
                for ref in refs:
                    c = _count_ngrams(ref, n).get(gram, 0)
                    if c > max_ref:
                        max_ref = c
                gained[n] += information(gram, n) * min(count, max_ref)
    score = 0.0
    for n in range(1, max_n + 1):
        if attempted[n] > 0:
            score += gained[n] / attempted[n]
    beta = math.log(0.5) / (math.log(1.5) ** 2)
    if mean_ref_length <= 0 or sys_length <= 0:
        return 0.0
    ratio = sys_length / mean_ref_length
    if ratio > 1.0:
        ratio = 1.0
    return score * math.exp(beta * (math.log(ratio) ** 2))


def oracle_meteor(hyp, refs, alpha=0.9, beta=3.0, gamma=0.5):
    best = 0.0
    for ref in refs:
        taken = set()
        pairs = []
        for i in range(len(hyp)):
            for j in range(len(ref)):
                if j not in taken and ref[j] == hyp[i]:
                    taken.add(j)
                    pairs.append((i, j))
                    break
        m = len(pairs)
        if m == 0:
            continue
        p = m / len(hyp)
        r = m / len(ref)
        f = (p * r) / (alpha * p + (1.0 - alpha) * r)
        chunks = 0
        prev = None
        for pair in pairs:
            if prev is None or pair[0] != prev[0] + 1 or pair[1] != prev[1] + 1:
                chunks += 1
            prev = pair
        score = f * (1.0 - gamma * (chunks / m) ** beta)
        if score > best:
            best = score
    return best


def golden_corpus_path():
    return os.path.join(os.path.dirname(__file__), "data", "golden_corpus.json")


def golden_metrics_path():
    return os.path.join(os.path.dirname(__file__), "data", "golden_metrics.json")


def main():
    with open(golden_corpus_path()) as fh:
        corpus = json.load(fh)
    meteor_scores = [oracle_meteor(item["hyp"], item["refs"]) for item in corpus]
    out = {
        "provenance": (
            "Computed once by tests/oracles.py (independent brute-force "
            "scorers implemented from the published BLEU/NIST/METEOR "
            "definitions; nltk/sacrebleu unavailable on this machine's "
            "package mirror). Regenerate with: python3 tests/oracles.py"),
        "corpus": "tests/data/golden_corpus.json",
        "bleu4": oracle_bleu4(corpus),
        "nist": oracle_nist(corpus),
        "meteor_per_instance": meteor_scores,
        "meteor_mean": sum(meteor_scores) / len(meteor_scores),
    }
    with open(golden_metrics_path(), "w") as fh:
        json.dump(out, fh, indent=2)
        fh.write("\n")
    print(json.dumps({k: v for k, v in out.items() if k != "provenance"},
                     indent=2))


if __name__ == "__main__":
    main()
