"""Building a balanced yes/no VQA training corpus.

Target images give one example per generated question with a known
answer, but that pool is almost all "Yes". For every question the
builder samples non-target images of the same category, has a mock
annotator label them, keeps the first opposite-labeled one, and finally
downsamples the majority class to an exact 50/50 split.

Run:  python demos/03_balanced_corpus.py
"""

from collections import Counter

from vqarerank import MockVqaClient, RetrievalQuery, Triplet, VisualQuestion
from vqarerank.dataset import balance, positives_from_targets, sample_and_annotate

triplets = [
    Triplet(
        query=RetrievalQuery(
            query_id=f"t{i}", reference_image_id=f"ref-{i:02d}",
            modification_text="is black and has a floral print", category="dress",
        ),
        target_image_id=f"target-{i:02d}",
    )
    for i in range(8)
]
questions = {
    f"t{i}": [
        VisualQuestion(text=f"Is dress {i} black?", expected_answer="Yes"),
        VisualQuestion(text=f"Does dress {i} have a floral print?", expected_answer="Yes"),
        VisualQuestion(text=f"Is dress {i} plain?", expected_answer="No"),
    ]
    for i in range(8)
}
pool = {"dress": [f"img-{i:03d}" for i in range(40)]}

positives = positives_from_targets(triplets, questions)
print(f"positives from targets: {len(positives)} examples, "
      f"answers {dict(Counter(e.answer for e in positives))}")

annotated = sample_and_annotate(
    triplets, questions, pool,
    annotator_client=MockVqaClient(),  # deterministic hash-derived labels
    rng_seed=42, per_question_attempt_cap=5,
)
print(f"auto-annotated:        {len(annotated)} examples, "
      f"answers {dict(Counter(e.answer for e in annotated))}")

corpus, report = balance(positives, annotated, rng_seed=42)
print(f"\nbalanced corpus:       {report.total_examples} examples")
print(f"  yes fraction         {report.yes_fraction:.3f}")
print(f"  dual-image fraction  {report.dual_image_fraction:.3f}")

print("\nsample records:")
for example in corpus[:4]:
    print(f"  {example.answer:<4} {example.source:<15} {example.question_text!r} "
          f"images={list(example.image_refs)}")
