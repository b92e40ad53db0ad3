"""Tour of the automatic evaluation suite on hand-sized examples:
BLEU-4, NIST, the exact-match METEOR variant, diversity, and grounding.

    python3 demos/04_metrics_tour.py
"""

from readgen.metrics import (bleu4, diversity, grounding, load_stopwords,
                             meteor_variant, nist)
from readgen.textdata import Document, tokenize

refs = [[tokenize("the cat sat on the mat"),
         tokenize("a cat was sitting on the mat")]]

for hyp_text in ("the cat sat on the mat",
                 "the cat sat on a rug",
                 "dogs everywhere"):
    hyp = [tokenize(hyp_text)]
    print(f"{hyp_text!r}")
    print(f"  BLEU-4 {bleu4(hyp, refs):.4f}"
          f"  NIST {nist(hyp, refs):.4f}"
          f"  METEOR {meteor_variant(hyp[0], refs[0]):.4f}")

print()
outputs = [tokenize("yes yes yes"), tokenize("yes yes yes")]
entropy, distinct, degenerate = diversity(outputs, 1)
print(f"repetitive outputs: entropy-1 {entropy:.4f} "
      f"distinct-1 {distinct:.4f} degenerate={degenerate}")

print()
doc = Document(sentences=[tokenize("the observatory opened in 1897")],
               tags=[["p"] * 5])
hyp = tokenize("the observatory is old")
context = set(tokenize("when did it open"))
g = grounding(hyp, doc, context, load_stopwords())
print("grounding on a document-copying response:")
for key in ("match", "precision", "recall", "f1"):
    print(f"  {key}: {g[key]}")
