#!/usr/bin/env python3
"""Derive sentence labels from an abstractive reference summary.

Datasets often ship a written summary instead of sentence-level labels.
The greedy pass ranks sentences by similarity to that summary, then
keeps each one only if adding it actually improves the combined
similarity. This demo prints the full decision trace.
"""

from cise.core import Document
from cise.labeling import SimilaritySpec, greedy_label_steps

doc = Document(
    "minutes",
    (
        "The board met on Tuesday to discuss the quarterly results.",
        "Revenue grew nine percent compared to the previous quarter.",
        "The growth was driven by the new subscription tier.",
        "Coffee and sandwiches were served during the break.",
        "The board approved a plan to expand into two new regions.",
        "Expansion will begin in the northern region next spring.",
        "The meeting adjourned at four in the afternoon.",
    ),
)

reference = (
    "Revenue grew nine percent on subscription strength, and the board "
    "approved expanding into two new regions starting next spring."
)

spec = SimilaritySpec("rouge1_f", delta=0.0)
truth, steps = greedy_label_steps(doc, reference, spec)

print("reference summary:")
print(f"  {reference}\n")
print("greedy pass (visited in order of standalone similarity):")
print("  sent  alone   gain     kept?  running")
for step in steps:
    print(
        f"  s{step.index}    {step.single_score:.3f}   {step.delta:+.3f}   "
        f"{'yes' if step.accepted else 'no ':>4}  {step.running_score:.3f}"
    )

print(f"\nlabeled important: {list(truth.important)}")
for i in truth.important:
    print(f"  s{i}: {doc.sentences[i]}")

# A stricter improvement bar prunes marginal additions.
strict = SimilaritySpec("rouge1_f", delta=0.05)
strict_truth, _ = greedy_label_steps(doc, reference, strict)
print(f"\nwith delta=0.05 the label set shrinks to {list(strict_truth.important)}")
