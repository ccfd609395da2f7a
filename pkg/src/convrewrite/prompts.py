"""Prompt templates and rewriting-request composition.

A request is an ordered list of role-tagged chat messages::

    system     scope text
    user       example raw utterance          ┐ example block, one pair
    assistant  example manual rewrite         ┘ per example turn
    user       prior raw utterance            ┐ context block, one pair
    assistant  prior model rewrite [+ answer] ┘ per completed turn
    user       instruction + current utterance

The current raw utterance is always the last line of the final user message.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence

from .conversation import Conversation, DataError, Turn, format_turn_key

ROLES = ("system", "user", "assistant")

SCOPE_FRAMING = "You are an assistant that rewrites conversational questions."

ANSWER_MARKER = "Answer:"

ANSWER_DIRECTIVE = (
    "Write the rewritten question on the first line. "
    "Then write a line starting with \"Answer:\" followed by your answer."
)

INSTRUCTIONS = {
    "P1": ("Rewrite the following question to be clear and complete and then provide an "
           "answer. Use the previous questions and answers to rewrite the question."),
    "P2": ("Rewrite the following question adding keywords for a retrieval system. Use the "
           "information from the previous questions. Return only the rewritten question."),
    "P3": ("Rephrase the current question into a more concise and context-free form that is "
           "suitable for a multi-turn information search dialog using the context of the "
           "previous question. Do not add any extra sentences or notes."),
    "P4": "Reformulate the current question following the examples.",
    "P5": ("In a multi-turn dialog system, rewrite the given sentence to be self-explanatory "
           "following the pattern of the previous interactions."),
    "E": ("Reformulate the current question into a de-contextualized rewrite under the "
          "multi-turn information-seeking dialog context. Then generate a correct response. "
          "Print also the reformulated question."),
}

TEMPLATE_IDS = tuple(INSTRUCTIONS)

INLINE_PAIR_COUNT = 8


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"invalid message role {self.role!r}")
        if not self.content or not self.content.strip():
            raise ValueError(f"empty {self.role} message")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    instruction_text: str
    scope_text: str
    uses_answers: bool
    inline_examples: bool


def get_template(template_id: str, answers_in_context: bool = True) -> PromptTemplate:
    """Return the template for ``template_id``.

    ``answers_in_context`` only affects ``E``: when false, its generated
    answers are not fed back into the context block.
    """
    if template_id not in INSTRUCTIONS:
        raise ValueError(f"unknown template {template_id!r}; choose from {', '.join(TEMPLATE_IDS)}")
    instruction = INSTRUCTIONS[template_id]
    uses_answers = template_id == "P1" or (template_id == "E" and answers_in_context)
    return PromptTemplate(
        id=template_id,
        instruction_text=instruction,
        scope_text=f"{SCOPE_FRAMING} {instruction}",
        uses_answers=uses_answers,
        inline_examples=template_id == "P4",
    )


@dataclass(frozen=True)
class RewriteRequest:
    messages: tuple[ChatMessage, ...]
    template_id: str
    turn_key: str
    meta: dict = field(default_factory=dict, compare=False)

    def to_dicts(self) -> list[dict]:
        return [m.to_dict() for m in self.messages]

    def to_json_obj(self) -> dict:
        return {"turn_key": self.turn_key, "template": self.template_id,
                "messages": self.to_dicts(), **self.meta}


def select_example(dataset: Sequence[Conversation], current_conv: int, seed: int = 13) -> Conversation:
    """Pick a demonstration conversation other than ``current_conv``.

    Only conversations whose every turn carries a manual rewrite are eligible.
    The draw depends on the seed, the current conversation id and the
    dataset order, nothing else.
    """
    eligible = [c for c in dataset if c.conv_id != current_conv and c.has_manual and len(c)]
    if not eligible:
        raise DataError(
            f"no example conversation available for conversation {current_conv}: "
            "need another conversation with manual rewrites for every turn")
    rng = random.Random(f"{seed}:{current_conv}")
    return rng.choice(eligible)


def inline_pairs(example: Conversation, count: int = INLINE_PAIR_COUNT) -> list[tuple[str, str]]:
    # first `count` turns of the example, wrapping around when it is shorter
    turns = example.turns
    return [(turns[i % len(turns)].raw, turns[i % len(turns)].manual) for i in range(count)]


def _final_user_content(template: PromptTemplate, example: Conversation, utterance: str) -> str:
    parts = [template.instruction_text]
    if template.inline_examples:
        parts.extend(f"Question: {raw} Rewritten: {manual}"
                     for raw, manual in inline_pairs(example))
    if template.uses_answers:
        parts.append(ANSWER_DIRECTIVE)
    parts.append(utterance)
    return "\n".join(parts)


def assistant_context(template: PromptTemplate, turn: Turn) -> str:
    if template.uses_answers and turn.answer:
        return f"{turn.rewritten}\n{ANSWER_MARKER} {turn.answer}"
    return turn.rewritten


def build_request(template: PromptTemplate, example: Conversation,
                  history: Sequence[Turn], current: Turn) -> RewriteRequest:
    if current.turn_no != len(history) + 1:
        raise DataError(
            f"turn {current.key}: expected {current.turn_no - 1} prior turns, got {len(history)}")
    for t in example.turns:
        if not t.manual:
            raise DataError(f"example turn {t.key} has no manual rewrite")

    messages = [ChatMessage("system", template.scope_text)]
    for t in example.turns:
        messages.append(ChatMessage("user", t.raw))
        messages.append(ChatMessage("assistant", t.manual))
    for t in history:
        if t.rewritten is None:
            raise DataError(f"history turn {t.key} has no rewrite")
        if template.uses_answers and t.answer is None:
            raise DataError(f"history turn {t.key} has no generated answer (template {template.id})")
        messages.append(ChatMessage("user", t.raw))
        messages.append(ChatMessage("assistant", assistant_context(template, t)))
    messages.append(ChatMessage("user", _final_user_content(template, example, current.raw)))
    return RewriteRequest(tuple(messages), template.id,
                          format_turn_key(current.conv_id, current.turn_no),
                          meta={"example_conv": example.conv_id})


def expected_message_count(example_turns: int, prior_turns: int) -> int:
    return 2 * (example_turns + prior_turns) + 2


def utterance_of(messages) -> str:
    """The current utterance carried by a request's final user message."""
    last = messages[-1]
    content = last.content if isinstance(last, ChatMessage) else last["content"]
    return content.rsplit("\n", 1)[-1]
