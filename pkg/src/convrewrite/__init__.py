"""Conversational query rewriting with instructed chat models, plus the
retrieval and evaluation machinery to measure what each rewrite buys."""

from .conversation import Conversation, DataError, Turn, load_topics, parse_turn_key
from .index import InvertedIndex, LexicalRetriever, build_index, read_collection, search
from .metrics import EvalConfig, MetricReport, evaluate
from .prompts import build_request, get_template, select_example
from .rewriter import QueryRewriter, rewrites_table
from .stats import compare_systems, paired_t
from .trec import read_qrels, read_run, write_run

__all__ = [
    "Conversation", "DataError", "EvalConfig", "InvertedIndex", "LexicalRetriever",
    "MetricReport", "QueryRewriter", "Turn", "build_index", "build_request",
    "compare_systems", "evaluate", "get_template", "load_topics", "paired_t",
    "parse_turn_key", "read_collection", "read_qrels", "read_run", "rewrites_table", "search",
    "select_example", "write_run",
]

__version__ = "0.1.0"
