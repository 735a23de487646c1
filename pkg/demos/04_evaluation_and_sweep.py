"""Retrieval metrics and the re-ranking depth/cost tradeoff.

A synthetic benchmark where deeper re-ranking keeps improving recall:
the target sits at CIR rank 15, and the VQA backend (mock, deterministic)
gives it the best compatibility score, so it climbs once n reaches its
rank. Requests issued grow linearly with n, which is the desk-scale
stand-in for GPU seconds per query.

Run:  python demos/04_evaluation_and_sweep.py
"""

import math

from vqarerank import MockVqaClient, RerankConfig, RetrievalQuery, VisualQuestion
from vqarerank.engine import build_requests, cir_only_ranking, rerank
from vqarerank.evaluation import mrr, recall_at_k, sweep_n

N_CANDIDATES = 60
TARGET_RANK = 15  # CIR rank of the annotated target (1-based)

queries = {
    f"q{i}": RetrievalQuery(
        query_id=f"q{i}", reference_image_id=f"ref-{i}",
        modification_text="is navy with a belt",
    )
    for i in range(5)
}
questions = [VisualQuestion(text="Is the dress navy?", expected_answer="Yes"),
             VisualQuestion(text="Does the dress have a belt?", expected_answer="Yes")]
scores = {
    qid: {f"{qid}-c{j:03d}": float(N_CANDIDATES - j) for j in range(N_CANDIDATES)}
    for qid in queries
}
targets = {qid: f"{qid}-c{TARGET_RANK - 1:03d}" for qid in queries}

client = MockVqaClient()
config_tokens = RerankConfig().answer_tokens
for qid, query in queries.items():
    for cid in scores[qid]:
        p = 0.98 if cid == targets[qid] else 0.30
        for request in build_requests(query, cid, questions, config_tokens):
            client.register(request, {"Yes": math.log(p), "No": math.log(1.0 - p)})


def runner(n):
    if n == 0:
        return {qid: cir_only_ranking(scores[qid]) for qid in queries}
    config = RerankConfig(lambda_vqa=0.3, k=0.8375, n=n)
    return {
        qid: rerank(queries[qid], scores[qid], questions, config, client)[0]
        for qid in queries
    }


points = sweep_n(runner, [0, 5, 10, 20, 40, 60], targets,
                 request_count=lambda: client.call_count, ks=(10, 50))

print(f"target sits at CIR rank {TARGET_RANK} for every query\n")
print(f"{'n':>4}  {'avg recall':>10}  {'requests':>9}")
for point in points:
    print(f"{point.n:>4}  {point.avg_recall:>10.1f}  {point.requests_issued:>9}")

best = runner(40)
print(f"\nat n=40: R@10={recall_at_k(best, targets, 10):.1f}  "
      f"R@50={recall_at_k(best, targets, 50):.1f}  MRR={mrr(best, targets):.4f}")
base = runner(0)
print(f"baseline: R@10={recall_at_k(base, targets, 10):.1f}  "
      f"R@50={recall_at_k(base, targets, 50):.1f}  MRR={mrr(base, targets):.4f}")
