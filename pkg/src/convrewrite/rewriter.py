"""Turn-by-turn rewriting of conversations through a chat backend."""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .conversation import Conversation, Turn
from .llm import BackendError, CompletionParams, MockBackend, postprocess
from .prompts import PromptTemplate, build_request, get_template, select_example
from .validation import check_conversations, check_positive_int

logger = logging.getLogger(__name__)


def rewrite_turn(template: PromptTemplate, example: Conversation, history: list[Turn],
                 current: Turn, backend, params: CompletionParams | None = None,
                 transcript=None) -> Turn:
    """Rewrite ``current`` and append the result to ``history``.

    First turns are passed through verbatim without contacting the backend.
    """
    if current.turn_no == 1:
        done = replace(current, rewritten=current.raw, answer="" if template.uses_answers else None)
        history.append(done)
        return done

    request = build_request(template, example, history, current)
    if transcript is not None:
        transcript(request)
    try:
        raw_output = backend.complete(request.messages, params or CompletionParams())
    except BackendError as exc:
        if exc.turn_key:
            raise
        raise BackendError(str(exc), turn_key=current.key) from exc
    except Exception as exc:
        raise BackendError(f"{type(exc).__name__}: {exc}", turn_key=current.key) from exc

    rewrite, answer = postprocess(raw_output, uses_answers=template.uses_answers)
    if template.uses_answers and answer is None:
        logger.warning("%s: no 'Answer:' line in model output; context will carry the rewrite only",
                       current.key)
        answer = ""
    done = replace(current, rewritten=rewrite, answer=answer)
    history.append(done)
    return done


def rewrite_conversation(template: PromptTemplate, example: Conversation, conversation: Conversation,
                         backend, params=None, transcript=None) -> Conversation:
    history: list[Turn] = []
    for turn in conversation.turns:
        rewrite_turn(template, example, history, turn, backend, params, transcript)
    return Conversation(conversation.conv_id, tuple(history))


class QueryRewriter(TransformerMixin, BaseEstimator):
    """Rewrite conversational utterances with an instructed chat model.

    ``fit`` records the pool of conversations that demonstration examples are
    drawn from; ``transform`` returns copies of the given conversations with
    ``rewritten`` (and, for answer-generating templates, ``answer``) filled in.

    Parameters
    ----------
    template : str
        One of ``P1``..``P5`` or ``E``.
    backend : object, optional
        Anything with ``complete(messages, params) -> str``. Defaults to a
        mock backend that maps raw utterances to the pool's manual rewrites.
    seed : int
        Seed for demonstration-conversation selection.
    answers_in_context : bool
        Whether template ``E`` feeds generated answers back into the context.
    n_jobs : int
        Conversations rewritten concurrently; turns within one conversation
        are always sequential.
    """

    def __init__(self, template="P5", backend=None, seed=13, answers_in_context=True,
                 model_name="gpt-3.5-turbo", temperature=0.0, max_output_tokens=256,
                 n_jobs=1, transcript_path=None):
        self.template = template
        self.backend = backend
        self.seed = seed
        self.answers_in_context = answers_in_context
        self.model_name = model_name
        self.temperature = temperature
        self.max_output_tokens = max_output_tokens
        self.n_jobs = n_jobs
        self.transcript_path = transcript_path

    def fit(self, X, y=None):
        pool = check_conversations(X)
        if len(pool) < 2:
            raise ValueError("the example pool needs at least two conversations")
        self.template_ = get_template(self.template, self.answers_in_context)
        self.params_ = CompletionParams(self.model_name, self.temperature, self.max_output_tokens)
        self.pool_ = pool
        self.backend_ = self.backend if self.backend is not None else MockBackend.from_conversations(pool)
        check_positive_int(self.n_jobs, "n_jobs")
        return self

    def transform(self, X):
        check_is_fitted(self, "pool_")
        conversations = check_conversations(X)
        records: list[tuple[int, dict]] = []
        lock = threading.Lock()

        def run(index_conv):
            index, conv = index_conv
            example = select_example(self.pool_, conv.conv_id, self.seed)

            def transcript(request):
                with lock:
                    records.append((index, request.to_json_obj()))

            return rewrite_conversation(self.template_, example, conv, self.backend_,
                                        self.params_, transcript)

        items = list(enumerate(conversations))
        if self.n_jobs == 1:
            out = [run(item) for item in items]
        else:
            with ThreadPoolExecutor(max_workers=self.n_jobs) as pool:
                out = list(pool.map(run, items))

        self.transcript_ = [obj for _, obj in sorted(records, key=lambda r: r[0])]
        if self.transcript_path:
            with open(self.transcript_path, "w", encoding="utf-8") as fh:
                for obj in self.transcript_:
                    fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")
        return out

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).transform(X)


def rewrites_table(conversations) -> dict[str, str]:
    return {t.key: t.rewritten for c in conversations for t in c.turns}


def answers_table(conversations) -> dict[str, str]:
    return {t.key: t.answer for c in conversations for t in c.turns if t.answer}
