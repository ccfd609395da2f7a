"""End-to-end experiment: rewrite, retrieve, rerank, evaluate, compare.

Artifacts go to ``<out_dir>/cfg-<config hash>/``::

    config.txt
    rewrites.tsv            answers.tsv (answer-generating templates)
    transcript.jsonl        (when enabled)
    runs/<stage>/<system>.run
    reports/<stage>/<system>.json|.txt
    comparison/<stage>.json|.txt

Nothing in the directory depends on wall-clock time, so rerunning the same
configuration with a deterministic backend reproduces it byte for byte.
"""

from __future__ import annotations

import json
import logging
import shlex
from pathlib import Path

from .config import PipelineConfig
from .conversation import DataError, load_topics, write_key_value_tsv
from .index import InvertedIndex, LexicalRetriever, read_collection
from .llm import CachedBackend, HttpBackend, MockBackend, ResponseCache
from .metrics import EvalConfig, evaluate
from .rerank import IdentityReranker, OverlapReranker, SubprocessReranker, rerank_run
from .rewriter import QueryRewriter, answers_table, rewrites_table
from .stats import compare_systems
from .trec import read_qrels, write_run

logger = logging.getLogger(__name__)

BASELINE = "raw"


def make_backend(config: PipelineConfig, conversations=None):
    if config.backend == "http":
        backend = HttpBackend(config.endpoint, max_concurrency=config.workers)
    elif config.mock_fixture:
        backend = MockBackend.from_file(config.mock_fixture)
    else:
        backend = MockBackend.from_conversations(conversations or [])
    if config.cache_dir:
        backend = CachedBackend(backend, ResponseCache(config.cache_dir))
    return backend


def make_reranker(config: PipelineConfig):
    if config.reranker == "overlap":
        return OverlapReranker()
    if config.reranker == "identity":
        return IdentityReranker()
    return SubprocessReranker(shlex.split(config.reranker_command))


def eval_config(config: PipelineConfig) -> EvalConfig:
    return EvalConfig(config.cutoffs("precision_cutoffs"), config.cutoffs("ndcg_cutoffs"),
                      config.cutoffs("recall_cutoffs"), config.rel_threshold, config.gain,
                      config.strict)


def make_rewriter(config: PipelineConfig, backend, transcript_path=None) -> QueryRewriter:
    return QueryRewriter(template=config.template, backend=backend, seed=config.seed,
                         answers_in_context=config.answers_in_context,
                         model_name=config.model_name, temperature=config.temperature,
                         max_output_tokens=config.max_output_tokens, n_jobs=config.workers,
                         transcript_path=transcript_path)


def run_pipeline(config: PipelineConfig) -> Path:
    config.validate()
    for name in ("topics", "qrels"):
        if not getattr(config, name):
            raise DataError(f"pipeline needs '{name}'")
    if not (config.collection or config.index):
        raise DataError("pipeline needs 'collection' or 'index'")
    if config.rerank and not config.collection:
        raise DataError("reranking needs 'collection' for passage text")

    # build the backend first so a missing API key fails before any work
    backend_conversations = None if config.backend == "http" else load_topics(
        config.topics, config.topics_format, config.manual_rewrites or None)
    backend = make_backend(config, backend_conversations)

    out = Path(config.out_dir) / f"cfg-{config.hash}"
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config.to_text(), encoding="utf-8")
    header = f"config {config.hash}"

    conversations = backend_conversations or load_topics(
        config.topics, config.topics_format, config.manual_rewrites or None)
    rewriter = make_rewriter(config, backend,
                             out / "transcript.jsonl" if config.transcript else None)
    rewritten = rewriter.fit(conversations).transform(conversations)
    write_key_value_tsv(rewrites_table(rewritten), out / "rewrites.tsv", header)
    if rewriter.template_.uses_answers:
        write_key_value_tsv(answers_table(rewritten), out / "answers.tsv", header)

    systems = {BASELINE: {t.key: t.raw for c in rewritten for t in c.turns}}
    if all(c.has_manual for c in rewritten):
        systems["manual"] = {t.key: t.manual for c in rewritten for t in c.turns}
    systems["rewritten"] = rewrites_table(rewritten)

    retriever = LexicalRetriever(model=config.ranking_model, k=config.k_first)
    if config.index:
        retriever.set_index(InvertedIndex.load(config.index))
    else:
        retriever.fit(read_collection(config.collection))
    passages = ({p.docno: p.text for p in read_collection(config.collection)}
                if config.rerank else {})
    reranker = make_reranker(config) if config.rerank else None

    qrels = read_qrels(config.qrels)
    econf = eval_config(config)
    stages = ["first-stage"] + (["second-stage"] if config.rerank else [])
    reports = {stage: {} for stage in stages}
    tag_suffix = config.hash[:8]
    for system, queries in systems.items():
        retriever.tag = f"{system}-{config.ranking_model}-{tag_suffix}"
        run = retriever.predict(queries)
        runs = {"first-stage": run}
        if reranker is not None:
            runs["second-stage"] = rerank_run(run, queries, passages, reranker,
                                              tag=f"{system}-rerank-{tag_suffix}")
        for stage, stage_run in runs.items():
            write_run(stage_run, out / "runs" / stage / f"{system}.run")
            report = evaluate(stage_run, qrels, econf)
            report.settings["config_hash"] = config.hash
            report.run_tag = system
            report.save_json(out / "reports" / stage / f"{system}.json")
            (out / "reports" / stage / f"{system}.txt").write_text(
                report.to_text(per_topic=True), encoding="utf-8")
            reports[stage][system] = report

    pairs = [(s, BASELINE) for s in systems if s != BASELINE]
    m = config.m or len(pairs)
    for stage in stages:
        sig = [compare_systems(reports[stage][a], reports[stage][b], config.alpha, m)
               for a, b in pairs]
        (out / "comparison").mkdir(parents=True, exist_ok=True)
        (out / "comparison" / f"{stage}.txt").write_text(
            f"# config {config.hash}\n" + "\n".join(s.to_text() for s in sig), encoding="utf-8")
        (out / "comparison" / f"{stage}.json").write_text(
            json.dumps({"config_hash": config.hash, "comparisons": [s.to_json_obj() for s in sig]},
                       indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("artifacts written to %s", out)
    return out
