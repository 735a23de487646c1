"""Question-driven re-ranking for composed image retrieval.

The package turns a textual modification request into yes/no visual
questions, scores candidate images by querying a VQA backend for answer
probabilities, fuses the compatibility score with the base retrieval
score, and re-ranks. It also ships the balanced VQA corpus builder and
the retrieval evaluation harness.
"""

from .domain import (
    AnswerProbability,
    CandidateScore,
    CandidateSet,
    CandidateTrace,
    Category,
    Ranking,
    ReasoningTrace,
    RerankConfig,
    RetrievalQuery,
    TraceEntry,
    VisualQuestion,
    validate_query,
)
from .engine import cir_only_ranking, rerank, select_top_n
from .scoring import answer_probability, fuse, normalize_cir, sigma_k, vqa_score
from .questions import (
    QuestionGenStats,
    build_prompt,
    generate_questions,
    parse_question_list,
    question_stats,
    serialize_questions,
)
from .dataset import BalanceReport, Triplet, VqaExample, balance, build_corpus
from .evaluation import (
    SweepPoint,
    aggregate,
    global_recall,
    mrr,
    recall_at_k,
    sweep_n,
    vqa_classifier_metrics,
)
from .clients import (
    MockTextGenClient,
    MockVqaClient,
    OpenAIChatClient,
    TextGenRequest,
    VqaRequest,
    bounded_map,
)

__version__ = "0.1.0"

__all__ = [
    "AnswerProbability",
    "BalanceReport",
    "CandidateScore",
    "CandidateSet",
    "CandidateTrace",
    "Category",
    "MockTextGenClient",
    "MockVqaClient",
    "OpenAIChatClient",
    "QuestionGenStats",
    "Ranking",
    "ReasoningTrace",
    "RerankConfig",
    "RetrievalQuery",
    "SweepPoint",
    "TextGenRequest",
    "TraceEntry",
    "Triplet",
    "VisualQuestion",
    "VqaExample",
    "VqaRequest",
    "aggregate",
    "answer_probability",
    "balance",
    "bounded_map",
    "build_corpus",
    "build_prompt",
    "cir_only_ranking",
    "fuse",
    "generate_questions",
    "global_recall",
    "mrr",
    "normalize_cir",
    "parse_question_list",
    "question_stats",
    "recall_at_k",
    "rerank",
    "select_top_n",
    "serialize_questions",
    "sigma_k",
    "sweep_n",
    "validate_query",
    "vqa_classifier_metrics",
    "vqa_score",
]
