"""How the data-weighting scheme redistributes a batch's loss mass.

Responses that overlap their document get larger weights; a batch where
nothing overlaps falls back to uniform weights.

    python3 demos/03_data_weighting.py
"""

from readgen.textdata import ConversationInstance, Document, tokenize
from readgen.training import closeness_score, weight_batch


def make(doc, resp, iid):
    sents = [tokenize(doc)]
    return ConversationInstance(
        instance_id=iid, history=[tokenize("hello there")],
        document=Document(sentences=sents,
                          tags=[["p"] * len(s) for s in sents]),
        response=tokenize(resp))


doc = "the palace gardens were replanted in the spring of 1ufb"
batch = [
    make(doc, "the gardens were replanted in the spring", "copies-a-lot"),
    make(doc, "the palace is nice", "copies-a-little"),
    make(doc, "what about dinner tonight", "ignores-the-document"),
]

for inst in batch:
    c = closeness_score(inst.document, inst.response)
    print(f"{inst.instance_id:22s} closeness {c:.4f}")

weighted = weight_batch(batch)
print()
for inst, w in zip(weighted.instances, weighted.weights):
    print(f"{inst.instance_id:22s} weight    {w:.4f}")
print("weights sum to", sum(weighted.weights))

print()
disjoint = [make("a b c", "x y z", f"d{i}") for i in range(3)]
print("all-zero closeness falls back to",
      weight_batch(disjoint).weights)
