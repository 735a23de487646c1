"""End-to-end re-ranking of one query, with the reasoning trace.

A dress query with three verification questions (one of them comparing
against the reference image) re-ranks eight candidates. The top four by
CIR score are nearly tied; the VQA evidence promotes the candidate that
actually satisfies the requested changes. Answer probabilities come from
a deterministic mock backend, so the output is stable.

Run:  python demos/02_rerank_walkthrough.py
"""

import math

from vqarerank import MockVqaClient, RerankConfig, RetrievalQuery, VisualQuestion, rerank
from vqarerank.engine import build_requests, cir_only_ranking

query = RetrievalQuery(
    query_id="q-dress-001",
    reference_image_id="ref-101",
    modification_text="is solid black with no sleeves and longer",
)
questions = [
    VisualQuestion(text="Is the dress solid black?", expected_answer="Yes"),
    VisualQuestion(text="Does the dress have sleeves?", expected_answer="No"),
    VisualQuestion(text="Is the dress longer than in the reference image?",
                   expected_answer="Yes", needs_reference=True),
]
cir_scores = {
    "cand-01": 10.0, "cand-02": 9.98, "cand-03": 9.96, "cand-04": 9.94,
    "cand-05": 6.5, "cand-06": 4.0, "cand-07": 2.5, "cand-08": 0.0,
}
config = RerankConfig(lambda_vqa=0.068, k=0.8375, n=4)

# Hand-built answer probabilities: cand-04 satisfies everything, cand-02
# almost nothing; the rest sit in between.
probabilities = {
    "cand-01": [0.6, 0.7, 0.5],  # p(yes) per question
    "cand-02": [0.1, 0.8, 0.3],
    "cand-03": [0.7, 0.75, 0.4],
    "cand-04": [0.95, 0.1, 0.9],
}
client = MockVqaClient(strict=True)
for cid, ps in probabilities.items():
    for request, p in zip(build_requests(query, cid, questions, config.answer_tokens), ps):
        client.register(request, {"Yes": math.log(p), "No": math.log(1.0 - p)})

print(f"query: {query.modification_text!r}\n")
print("CIR-only order: ", " > ".join(cir_only_ranking(cir_scores).candidate_ids()))

ranking, trace = rerank(query, cir_scores, questions, config, client)
print("fused order:    ", " > ".join(ranking.candidate_ids()))
print()

print(f"{'candidate':<10} {'cir_norm':>9} {'vqa':>7} {'fused':>8}  reranked")
for entry in ranking.entries:
    vqa = f"{entry.vqa_score:.4f}" if entry.vqa_score is not None else "-"
    print(f"{entry.candidate_image_id:<10} {entry.cir_score_norm:>9.4f} {vqa:>7} "
          f"{entry.fused_score:>8.4f}  {entry.reranked}")

winner = ranking.entries[0].candidate_image_id
candidate_trace = trace.for_candidate(winner)
print(f"\nwhy {winner} wins:")
for e in candidate_trace.entries:
    mark = "ok" if e.predicted_answer == e.question.expected_answer else " X"
    print(f"  [{mark}] {e.question.text:<52} expected {e.question.expected_answer:<3} "
          f"p={e.probability_of_expected:.2f}")
