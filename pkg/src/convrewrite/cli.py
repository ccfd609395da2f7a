"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 backend error.
"""

from __future__ import annotations

import argparse
import logging
import shlex
import sys
from dataclasses import asdict, fields

from .analysis import Analyzer, load_stopwords
from .config import ConfigError, PipelineConfig, resolve_config
from .conversation import DataError, load_topics, read_key_value_tsv, write_key_value_tsv
from .index import InvertedIndex, LexicalRetriever, build_index, read_collection
from .llm import API_KEY_ENV, BackendError, PostprocessError
from .metrics import EvalConfig, MetricReport, evaluate
from .pipeline import make_backend, make_rewriter, run_pipeline
from .rerank import (IdentityReranker, OverlapReranker, RerankError, SubprocessReranker,
                     rerank_run)
from .rewriter import answers_table, rewrites_table
from .stats import compare_systems
from .trec import read_qrels, read_run, write_run

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3

logger = logging.getLogger("convrewrite")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser, skip=()):
    p.add_argument("--config", help="line-based 'key = value' settings file")
    group = p.add_argument_group("settings (override the config file)")
    defaults = asdict(PipelineConfig())
    for f in fields(PipelineConfig):
        if f.name in skip:
            continue
        group.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, default=None,
                           metavar=f.type.upper() if f.type in ("int", "float", "bool") else "VALUE",
                           help=f"default: {defaults[f.name]!r}")


def _config_from(args) -> PipelineConfig:
    overrides = {f.name: getattr(args, f.name, None) for f in fields(PipelineConfig)}
    return resolve_config(args.config, overrides)


def cmd_rewrite(args) -> int:
    config = _config_from(args)
    if not config.topics:
        raise ConfigError("--topics is required")
    conversations = load_topics(config.topics, config.topics_format, config.manual_rewrites or None)
    backend = make_backend(config, conversations)
    rewriter = make_rewriter(config, backend, args.transcript_path)
    out = rewriter.fit(conversations).transform(conversations)
    header = f"config {config.hash}"
    write_key_value_tsv(rewrites_table(out), args.out, header)
    if rewriter.template_.uses_answers:
        answers = args.answers_out or f"{args.out}.answers"
        write_key_value_tsv(answers_table(out), answers, header)
    calls = getattr(getattr(backend, "backend", backend), "calls", None)
    if calls is not None:
        logger.info("backend calls: %d", calls)
    return EXIT_OK


def cmd_index(args) -> int:
    analyzer = Analyzer(load_stopwords(args.stopwords))
    index = build_index(read_collection(args.collection), analyzer)
    index.save(args.out)
    if args.dump:
        with open(args.dump, "w", encoding="utf-8") as fh:
            index.dump_text(fh)
    logger.info("indexed %d passages, %d terms", index.num_docs, len(index.postings))
    return EXIT_OK


def cmd_search(args) -> int:
    retriever = LexicalRetriever(model=args.model, k=args.k, k1=args.k1, b=args.b,
                                 stopwords_path=args.stopwords, tag=args.tag)
    retriever.set_index(InvertedIndex.load(args.index))
    run = retriever.predict(read_key_value_tsv(args.queries))
    write_run(run, args.out)
    return EXIT_OK


def _reranker(args):
    if args.reranker == "overlap":
        return OverlapReranker()
    if args.reranker == "identity":
        return IdentityReranker()
    if not args.command:
        raise ConfigError("--reranker external needs --command")
    return SubprocessReranker(shlex.split(args.command))


def cmd_rerank(args) -> int:
    run = read_run(args.run)
    passages = {p.docno: p.text for p in read_collection(args.collection)}
    queries = read_key_value_tsv(args.queries)
    out = rerank_run(run, queries, passages, _reranker(args), args.depth, args.tag)
    write_run(out, args.out)
    return EXIT_OK


def _cutoffs(text):
    try:
        values = tuple(int(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("cutoffs must be positive")
    return values


def cmd_eval(args) -> int:
    config = EvalConfig(args.p_cutoffs, args.ndcg_cutoffs, args.r_cutoffs, args.rel_threshold,
                        args.gain, not args.lenient)
    report = evaluate(read_run(args.run), read_qrels(args.qrels), config)
    if args.out:
        report.save_json(args.out)
    sys.stdout.write(report.to_text(per_topic=args.per_topic))
    return EXIT_OK


def cmd_compare(args) -> int:
    a, b = MetricReport.load_json(args.report_a), MetricReport.load_json(args.report_b)
    report = compare_systems(a, b, args.alpha, args.m)
    text = report.to_text()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    if args.json:
        report.save_json(args.json)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    config = _config_from(args)
    if args.print_config:
        sys.stdout.write(config.to_text())
        return EXIT_OK
    out = run_pipeline(config)
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="convrewrite", description=(
        "Rewrite conversational utterances with a chat model and measure retrieval impact. "
        f"The HTTP backend reads its API key from ${API_KEY_ENV}."))
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("rewrite", help="rewrite every non-first turn of every conversation")
    p.add_argument("--out", required=True, help="rewrites file, '<turn_key>\\t<text>' per line")
    p.add_argument("--answers-out", help="answers sidecar (P1/E); default <out>.answers")
    p.add_argument("--transcript", dest="transcript_path",
                   help="write every request as JSON lines here")
    _add_config_flags(p, skip=("transcript",))
    p.set_defaults(func=cmd_rewrite)

    p = sub.add_parser("index", help="index a 'docno\\ttext' collection")
    p.add_argument("--collection", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stopwords", help="replacement stopword list, one word per line")
    p.add_argument("--dump", help="also write a plain-text dump of the index")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="first-stage retrieval into a TREC run file")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True, help="'<qid>\\t<text>' per line")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=1000, help="default: 1000")
    p.add_argument("--model", choices=("dph", "bm25"), default="dph")
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    p.add_argument("--stopwords")
    p.add_argument("--tag")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("rerank", help="rerank a run's top candidates")
    p.add_argument("--run", required=True)
    p.add_argument("--collection", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--reranker", choices=("overlap", "identity", "external"), default="overlap")
    p.add_argument("--command", help="external scorer command line (JSON lines on stdin/stdout)")
    p.add_argument("--depth", type=int, default=1000)
    p.add_argument("--tag")
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("eval", help="MRR, P@k, NDCG@k, R@k of a run")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--out", help="JSON report with per-topic values")
    p.add_argument("--rel-threshold", type=int, default=1)
    p.add_argument("--p-cutoffs", type=_cutoffs, default=(1,))
    p.add_argument("--ndcg-cutoffs", type=_cutoffs, default=(3,))
    p.add_argument("--r-cutoffs", type=_cutoffs, default=(500,))
    p.add_argument("--gain", choices=("linear", "exponential"), default="linear")
    p.add_argument("--lenient", action="store_true",
                   help="drop judged topics missing from the run instead of scoring them 0")
    p.add_argument("--per-topic", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="paired t-test between two JSON reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("-m", type=int, default=1, help="Bonferroni comparison count (default: 1)")
    p.add_argument("--out", help="plain-text table")
    p.add_argument("--json", help="JSON twin of the table")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("pipeline", help="rewrite, retrieve, rerank, evaluate and compare")
    p.add_argument("--print-config", action="store_true", help="print resolved settings and exit")
    _add_config_flags(p)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (BackendError, PostprocessError, RerankError) as exc:
        print(f"convrewrite: backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except DataError as exc:
        print(f"convrewrite: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ValueError) as exc:
        print(f"convrewrite: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"convrewrite: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
