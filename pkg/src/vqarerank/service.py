"""Single-endpoint re-ranking service.

POST /rerank takes one query plus its candidates' raw CIR scores (and
optionally pre-generated questions), runs the re-ranking engine against
the configured backends and returns the ranking together with the
reasoning trace. Requests are stateless; schema violations yield 400 with
the offending field path, backend outages beyond the failure policy 502.
"""

from __future__ import annotations

import logging

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import engine, formats, questions as qgen
from .config import AppConfig, build_textgen_client, build_vqa_client
from .domain import Category, RetrievalQuery
from .errors import BackendError, DataError, ParseError, VqaRerankError

logger = logging.getLogger(__name__)


class QueryBody(BaseModel):
    query_id: str = Field(min_length=1)
    reference_image_id: str = Field(min_length=1)
    modification_text: str = Field(min_length=1)
    category: str = "other"


class CandidateBody(BaseModel):
    candidate_id: str = Field(min_length=1)
    score: float


class QuestionBody(BaseModel):
    text: str
    expected_answer: str
    needs_reference: bool = False


class RerankRequest(BaseModel):
    query: QueryBody
    candidates: list[CandidateBody] = Field(min_length=1)
    questions: list[QuestionBody] | None = None


def create_app(
    config: AppConfig,
    *,
    vqa_client=None,
    textgen_client=None,
) -> FastAPI:
    """Build the service; clients may be injected for tests."""
    app = FastAPI(title="vqarerank", version="0.1.0")
    vqa = vqa_client if vqa_client is not None else build_vqa_client(config)
    textgen = textgen_client if textgen_client is not None else build_textgen_client(config)

    @app.exception_handler(RequestValidationError)
    async def validation_handler(_request: Request, exc: RequestValidationError):
        errors = [
            {
                "field": ".".join(str(p) for p in err.get("loc", ()) if p != "body"),
                "message": err.get("msg", "invalid"),
            }
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"detail": errors})

    @app.post("/rerank")
    def rerank_endpoint(body: RerankRequest):
        try:
            query = RetrievalQuery(
                query_id=body.query.query_id,
                reference_image_id=body.query.reference_image_id,
                modification_text=body.query.modification_text,
                category=Category(body.query.category),
            )
        except (ValueError, DataError) as exc:
            return JSONResponse(
                status_code=400, content={"detail": [{"field": "query", "message": str(exc)}]}
            )

        cir_scores = {c.candidate_id: c.score for c in body.candidates}
        if len(cir_scores) != len(body.candidates):
            return JSONResponse(
                status_code=400,
                content={"detail": [{"field": "candidates", "message": "duplicate candidate ids"}]},
            )

        try:
            if body.questions is not None:
                question_list = [
                    formats.question_from_dict(q.model_dump()) for q in body.questions
                ]
            else:
                question_list = qgen.generate_questions(
                    query, textgen, config.retry_budget,
                    template=config.prompt_template(),
                )
            ranking, trace = engine.rerank(
                query,
                cir_scores,
                question_list,
                config.rerank,
                vqa_client=vqa,
                fan_out=config.fan_out,
            )
        except ParseError as exc:
            return JSONResponse(
                status_code=400,
                content={"detail": [{"field": "questions", "message": str(exc)}]},
            )
        except BackendError as exc:
            return JSONResponse(status_code=502, content={"detail": str(exc)})
        except VqaRerankError as exc:
            return JSONResponse(
                status_code=400, content={"detail": [{"field": "", "message": str(exc)}]}
            )

        return JSONResponse(
            content={
                "query_id": query.query_id,
                "ranking": formats.ranking_to_record(query.query_id, ranking)["ranking"],
                "trace": formats.trace_to_record(trace),
            }
        )

    return app
