"""Operator command-line interface.

Subcommands wire the pipeline stages: ``questions`` builds the question
corpus, ``build-dataset`` the balanced VQA training corpus, ``rerank`` the
rankings and reasoning traces, ``eval`` the metrics report, ``trace``
pretty-prints one candidate's reasoning, and ``serve`` exposes the
re-ranking engine over HTTP.

Exit codes: 0 success, 1 usage, 2 data error, 3 backend error.
"""

from __future__ import annotations

import logging
import sys

import click

from . import dataset, formats, pipeline, questions as qgen
from .config import (
    apply_overrides,
    build_textgen_client,
    build_vqa_client,
    load_config,
    ROLE_ANNOTATOR,
)
from .errors import BackendError, DataError, NotFound, VqaRerankError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3

_CONFIG_OPTIONS = [
    click.option("--config", "config_path", type=click.Path(), default=None, help="Config file (JSON)."),
    click.option("--lambda-vqa", type=float, default=None, help="Fusion weight override."),
    click.option("--k", type=float, default=None, help="Compression temperature override."),
    click.option("--n", type=int, default=None, help="Re-ranking depth override."),
    click.option("--seed", type=int, default=None, help="RNG seed override."),
    click.option("--backend", type=click.Choice(["live", "mock"]), default=None, help="Force all backend modes."),
    click.option("--cache-dir", type=click.Path(), default=None, help="Response cache directory."),
    click.option("--fan-out", type=int, default=None, help="Max in-flight backend requests."),
]


def _with_config_options(command):
    for option in reversed(_CONFIG_OPTIONS):
        command = option(command)
    return command


def _load(config_path, lambda_vqa, k, n, seed, backend, cache_dir, fan_out):
    return apply_overrides(
        load_config(config_path),
        lambda_vqa=lambda_vqa,
        k=k,
        n=n,
        seed=seed,
        backend_mode=backend,
        cache_dir=cache_dir,
        fan_out=fan_out,
    )


@click.group()
def cli():
    """Composed-image-retrieval re-ranking tools."""


@cli.command("questions")
@_with_config_options
@click.option("--triplets", "triplets_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
def cmd_questions(config_path, lambda_vqa, k, n, seed, backend, cache_dir, fan_out,
                  triplets_path, out_path):
    """Generate the visual-question corpus for a triplets file."""
    config = _load(config_path, lambda_vqa, k, n, seed, backend, cache_dir, fan_out)
    records = formats.load_triplet_records(triplets_path)
    queries = pipeline.queries_from_triplets(records)
    client = build_textgen_client(config)
    entries = pipeline.generate_question_corpus(
        queries, client,
        retry_budget=config.retry_budget,
        template=config.prompt_template(),
    )
    formats.write_question_corpus(out_path, entries)
    stats = qgen.question_stats({e["query_id"]: e["questions"] for e in entries})
    counters = pipeline.client_stats(client)
    click.echo(
        f"questions: {len(entries)} queries, "
        f"avg_questions={stats.avg_questions_per_triplet:.2f}, "
        f"dual_fraction={stats.dual_image_fraction:.2f}, "
        f"backend_calls={counters['backend_calls']}, cache_hits={counters['cache_hits']}"
    )


@cli.command("build-dataset")
@_with_config_options
@click.option("--triplets", "triplets_path", required=True, type=click.Path())
@click.option("--questions", "questions_path", required=True, type=click.Path())
@click.option("--image-index", "image_index_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--out-report", "report_path", default=None, type=click.Path())
def cmd_build_dataset(config_path, lambda_vqa, k, n, seed, backend, cache_dir, fan_out,
                      triplets_path, questions_path, image_index_path, out_path, report_path):
    """Build the balanced yes/no VQA training corpus."""
    config = _load(config_path, lambda_vqa, k, n, seed, backend, cache_dir, fan_out)
    records = formats.load_triplet_records(triplets_path)
    queries = {q.query_id: q for q in pipeline.queries_from_triplets(records)}
    triplets = [
        dataset.Triplet(query=queries[str(r["query_id"])], target_image_id=str(r["target"]))
        for r in records
    ]
    corpus = formats.load_question_corpus(questions_path)
    question_map = {qid: entry["questions"] for qid, entry in corpus.items()}
    image_pool = formats.load_image_index(image_index_path)
    annotator = build_vqa_client(config, role=ROLE_ANNOTATOR)

    examples, report = dataset.build_corpus(
        triplets,
        question_map,
        image_pool,
        annotator,
        config.seed,
        config.attempt_cap,
        fan_out=config.fan_out,
    )
    formats.write_vqa_corpus(out_path, examples)
    if report_path:
        formats.write_metrics_report(
            report_path,
            {
                "total_examples": report.total_examples,
                "yes_fraction": report.yes_fraction,
                "dual_image_fraction": report.dual_image_fraction,
            },
        )
    by_category: dict[str, list[str]] = {}
    for example in examples:
        category = str(queries[example.origin_query_id].category.value)
        by_category.setdefault(category, []).append(example.answer)
    category_view = ", ".join(
        f"{c}: {sum(1 for a in answers if a == 'Yes') / len(answers):.2f} yes"
        for c, answers in sorted(by_category.items())
    )
    click.echo(
        f"dataset: {report.total_examples} examples, "
        f"yes_fraction={report.yes_fraction:.3f}, "
        f"dual_fraction={report.dual_image_fraction:.3f} ({category_view})"
    )


@cli.command("rerank")
@_with_config_options
@click.option("--cir-scores", "scores_path", required=True, type=click.Path())
@click.option("--questions", "questions_path", required=True, type=click.Path())
@click.option("--out-rankings", "rankings_path", required=True, type=click.Path())
@click.option("--out-traces", "traces_path", required=True, type=click.Path())
def cmd_rerank(config_path, lambda_vqa, k, n, seed, backend, cache_dir, fan_out,
               scores_path, questions_path, rankings_path, traces_path):
    """Re-rank candidates by fused CIR + VQA score."""
    config = _load(config_path, lambda_vqa, k, n, seed, backend, cache_dir, fan_out)
    cir_scores = formats.load_cir_scores(scores_path)
    if not cir_scores:
        raise DataError(f"no score records in {scores_path}")
    corpus = formats.load_question_corpus(questions_path)
    client = build_vqa_client(config)
    rankings, traces = pipeline.rerank_all(cir_scores, corpus, config, client)
    formats.write_rankings(rankings_path, rankings)
    formats.write_traces(traces_path, traces)
    counters = pipeline.client_stats(client)
    click.echo(
        f"rerank: {len(rankings)} queries, n={config.rerank.n}, "
        f"lambda_vqa={config.rerank.lambda_vqa}, "
        f"backend_calls={counters['backend_calls']}, cache_hits={counters['cache_hits']}"
    )


@cli.command("eval")
@_with_config_options
@click.option("--rankings", "rankings_path", required=True, type=click.Path())
@click.option("--triplets", "triplets_path", required=True, type=click.Path())
@click.option("--out-report", "report_path", default=None, type=click.Path())
@click.option("--model-name", default="run")
def cmd_eval(config_path, lambda_vqa, k, n, seed, backend, cache_dir, fan_out,
             rankings_path, triplets_path, report_path, model_name):
    """Compute Recall@k / MRR metrics for a rankings file."""
    rankings = formats.load_rankings(rankings_path)
    if not rankings:
        raise DataError(f"rankings file {rankings_path} holds no queries")
    records = formats.load_triplet_records(triplets_path)
    targets = pipeline.targets_from_triplets(records)
    categories = pipeline.categories_from_triplets(records)
    report = pipeline.evaluate_rankings(
        rankings, targets, categories, model_name=model_name
    )
    if report_path:
        formats.write_metrics_report(report_path, report)
    click.echo(formats.format_metrics_table(report))
    overall = report["overall"]
    click.echo(
        f"eval: {overall['queries']} queries, MRR={overall['mrr']:.4f}, "
        f"recall={overall['recall']:.2f}"
    )


@cli.command("trace")
@click.option("--traces", "traces_path", required=True, type=click.Path())
@click.option("--query-id", required=True)
@click.option("--candidate-id", required=True)
def cmd_trace(traces_path, query_id, candidate_id):
    """Show the per-question reasoning behind one candidate's score."""
    traces = formats.load_traces(traces_path)
    trace = traces.get(query_id)
    if trace is None:
        raise NotFound(f"no trace for query {query_id!r}")
    candidate = trace.for_candidate(candidate_id)
    if candidate is None:
        raise NotFound(f"query {query_id!r} has no trace for candidate {candidate_id!r}")

    click.echo(f"query {query_id} / candidate {candidate_id}")
    header = f"{'question':<52}  {'predicted':<9}  {'expected':<8}  p(expected)"
    click.echo(header)
    click.echo("-" * len(header))
    for entry in candidate.entries:
        mark = "ok" if entry.predicted_answer == entry.question.expected_answer else "X"
        click.echo(
            f"{entry.question.text:<52}  {entry.predicted_answer:<9}  "
            f"{entry.question.expected_answer:<8}  {entry.probability_of_expected:.4f} [{mark}]"
        )
    if candidate.demoted:
        click.echo(f"candidate demoted: {candidate.error_count} question(s) failed")
    else:
        click.echo(f"vqa_score={candidate.vqa_score:.6f}")


@cli.command("serve")
@_with_config_options
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8080)
def cmd_serve(config_path, lambda_vqa, k, n, seed, backend, cache_dir, fan_out, host, port):
    """Run the single-endpoint re-ranking HTTP service."""
    import uvicorn

    from .service import create_app

    config = _load(config_path, lambda_vqa, k, n, seed, backend, cache_dir, fan_out)
    uvicorn.run(create_app(config), host=host, port=port)


def main(argv: list[str] | None = None) -> int:
    """Entry point mapping typed errors onto documented exit codes."""
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_USAGE
    except BackendError as exc:
        click.echo(f"backend error: {exc}", err=True)
        return EXIT_BACKEND
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA
    except VqaRerankError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
