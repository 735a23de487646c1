"""Domain type invariants and query validation."""

import pytest

from vqarerank.domain import (
    CandidateScore,
    CandidateSet,
    CandidateTrace,
    Category,
    Ranking,
    RerankConfig,
    RetrievalQuery,
    TraceEntry,
    VisualQuestion,
    AnswerProbability,
    join_captions,
    validate_query,
)
from vqarerank.errors import (
    DataError,
    DuplicateQueryId,
    EmptyModificationText,
    NonPositiveK,
    UnknownCategory,
)


class TestValidateQuery:
    def test_well_formed(self):
        query = validate_query(
            {"query_id": "q1", "candidate": "B001",
             "captions": ["is red with longer sleeves"], "category": "shirt"}
        )
        assert query.query_id == "q1"
        assert query.reference_image_id == "B001"
        assert query.modification_text == "is red with longer sleeves"
        assert query.category is Category.SHIRT

    def test_whitespace_only_text(self):
        with pytest.raises(EmptyModificationText):
            validate_query({"query_id": "q2", "candidate": "B002",
                            "captions": ["   "], "category": "dress"})

    def test_duplicate_id_on_second_record(self):
        seen = set()
        record = {"query_id": "q3", "candidate": "B003",
                  "captions": ["is shorter"], "category": "toptee"}
        validate_query(record, seen)
        with pytest.raises(DuplicateQueryId):
            validate_query(record, seen)

    def test_unknown_category(self):
        with pytest.raises(UnknownCategory):
            validate_query({"query_id": "q4", "candidate": "B004",
                            "captions": ["is blue"], "category": "trousers"})

    def test_two_captions_joined(self):
        query = validate_query(
            {"query_id": "q5", "candidate": "B005",
             "captions": ["is black", "has no sleeves"], "category": "dress"}
        )
        assert query.modification_text == "is black, and has no sleeves"

    def test_join_skips_empty_fragments(self):
        assert join_captions(["is black", "  "]) == "is black"


class TestTypes:
    def test_candidate_set_uniqueness(self):
        assert CandidateSet(("a", "b")).size == 2
        with pytest.raises(DataError):
            CandidateSet(("a", "a"))

    def test_visual_question_needs_question_mark(self):
        VisualQuestion(text="Is the dress black?", expected_answer="Yes")
        with pytest.raises(DataError):
            VisualQuestion(text="The dress is black", expected_answer="Yes")
        with pytest.raises(DataError):
            VisualQuestion(text="Is the dress black?", expected_answer="Maybe")

    def test_answer_probability_must_sum_to_one(self):
        AnswerProbability(0.25, 0.75)
        with pytest.raises(DataError):
            AnswerProbability(0.5, 0.4)

    def test_candidate_score_consistency(self):
        plain = CandidateScore("c1", cir_score_raw=3.0, cir_score_norm=0.5, fused_score=0.5)
        assert not plain.reranked
        with pytest.raises(DataError):
            CandidateScore("c1", cir_score_raw=3.0, cir_score_norm=0.5, fused_score=0.6)

    def test_rerank_config_bounds(self):
        config = RerankConfig()
        assert config.lambda_vqa == 0.068
        assert config.k == 0.8375
        assert config.n == 250
        with pytest.raises(NonPositiveK):
            RerankConfig(k=0.0)
        with pytest.raises(DataError):
            RerankConfig(n=0)
        with pytest.raises(DataError):
            RerankConfig(lambda_vqa=-0.1)


class TestRanking:
    def scores(self):
        return [
            CandidateScore("b", 2.0, 0.5, 0.5),
            CandidateScore("a", 1.0, 0.0, 0.9, vqa_score=1.0),
            CandidateScore("c", 3.0, 1.0, 1.0),
        ]

    def test_sorted_descending_with_tie_break(self):
        tied = [
            CandidateScore("z", 1.0, 0.5, 0.5),
            CandidateScore("a", 1.0, 0.5, 0.5),
        ]
        ranking = Ranking.from_scores(tied)
        assert ranking.candidate_ids() == ["a", "z"]

    def test_permutation_preserved(self):
        ranking = Ranking.from_scores(self.scores())
        assert sorted(ranking.candidate_ids()) == ["a", "b", "c"]
        assert ranking.candidate_ids() == ["c", "a", "b"]

    def test_unsorted_construction_rejected(self):
        with pytest.raises(DataError):
            Ranking(tuple(self.scores()))

    def test_rank_of(self):
        ranking = Ranking.from_scores(self.scores())
        assert ranking.rank_of("c") == 1
        assert ranking.rank_of("missing") is None


class TestTrace:
    def entry(self, p):
        return TraceEntry(
            question=VisualQuestion(text="Is it black?", expected_answer="Yes"),
            predicted_answer="Yes",
            probability_of_expected=p,
        )

    def test_mean_consistency_enforced(self):
        entries = (self.entry(0.4), self.entry(0.8))
        CandidateTrace("c1", entries, vqa_score=0.6)
        with pytest.raises(DataError):
            CandidateTrace("c1", entries, vqa_score=0.7)

    def test_demoted_candidate_has_no_score(self):
        trace = CandidateTrace("c1", (), vqa_score=None, demoted=True, error_count=3)
        assert trace.vqa_score is None


def test_query_requires_reference_image():
    with pytest.raises(DataError):
        RetrievalQuery(query_id="q", reference_image_id="", modification_text="x?")
