"""Two-turn instruction templates and conversation assembly.

The image slots are literal placeholder tokens `[IMAGE]` (the full image)
and `[ROI_IMAGE]` (the zoomed region), resolved by downstream consumers;
the question is inserted verbatim with no added brackets. Template
punctuation is kept exactly, including the trailing "?." a question mark
produces in the second instruction.
"""

from __future__ import annotations

from dataclasses import dataclass

from .roi import RoiBox, encode_ans1

IMAGE_TOKEN = "[IMAGE]"
ROI_IMAGE_TOKEN = "[ROI_IMAGE]"


@dataclass(frozen=True)
class Turn:
    role: str  # "user" | "assistant"
    content: str
    loss: bool  # assistant turns that contribute to the training loss


@dataclass(frozen=True)
class Conversation:
    turns: tuple[Turn, ...]

    def to_jsonable(self) -> list[dict]:
        return [{"role": t.role, "content": t.content, "loss": t.loss} for t in self.turns]


def _check_question(question: str) -> str:
    if not question or question != question.strip():
        raise ValueError(f"question must be nonempty and trimmed, got {question!r}")
    return question


def build_inst1(question: str, bracket_question: bool = False) -> str:
    """Locate instruction: full image plus the question, asking for the
    region of interest. `bracket_question` wraps the question in literal
    brackets (off by default)."""
    q = _check_question(question)
    if bracket_question:
        q = f"[{q}]"
    return f"{IMAGE_TOKEN} To answer the question: {q}, where is the region of interest in the image?"


def build_inst2(question: str, bracket_question: bool = False) -> str:
    """Answer instruction: presents the zoomed region and restates the
    question."""
    if not question:
        raise ValueError("question must be nonempty")
    q = f"[{question}]" if bracket_question else question
    return f"The region of interest in the image is {ROI_IMAGE_TOKEN}. Answer the question: {q}."


def build_conversation(question: str, ans1_box: RoiBox, answer: str) -> Conversation:
    """Assemble the 4-turn training conversation with loss only on the two
    assistant turns."""
    if not answer:
        raise ValueError("answer must be nonempty")
    conv = Conversation(
        turns=(
            Turn(role="user", content=build_inst1(question), loss=False),
            Turn(role="assistant", content=encode_ans1(ans1_box), loss=True),
            Turn(role="user", content=build_inst2(question), loss=False),
            Turn(role="assistant", content=answer, loss=True),
        )
    )
    lint_conversation(conv)
    return conv


def lint_conversation(conv: Conversation) -> None:
    """Reject conversations violating structure or placeholder discipline."""
    roles = [(t.role, t.loss) for t in conv.turns]
    if roles != [("user", False), ("assistant", True), ("user", False), ("assistant", True)]:
        raise ValueError(f"conversation must be user/assistant x2 with loss on answers, got {roles}")
    joined = "".join(t.content for t in conv.turns)
    for token in (IMAGE_TOKEN, ROI_IMAGE_TOKEN):
        if joined.count(token) != 1:
            raise ValueError(f"{token} must appear exactly once, found {joined.count(token)}")
        for t in conv.turns:
            if t.role != "user" and token in t.content:
                raise ValueError(f"{token} may only appear in user turns")
    if joined.index(IMAGE_TOKEN) > joined.index(ROI_IMAGE_TOKEN):
        raise ValueError(f"{IMAGE_TOKEN} must precede {ROI_IMAGE_TOKEN}")
