from __future__ import annotations

import pytest

from roizoom.prompt import (
    Conversation,
    Turn,
    build_conversation,
    build_inst1,
    build_inst2,
    lint_conversation,
)
from roizoom.roi import RoiBox

GOLDEN_INST1 = (
    "[IMAGE] To answer the question: What sport is this?, "
    "where is the region of interest in the image?"
)
GOLDEN_INST2 = (
    "The region of interest in the image is [ROI_IMAGE]. "
    "Answer the question: What sport is this?."
)


class TestTemplates:
    def test_inst1_snapshot(self):
        assert build_inst1("What sport is this?") == GOLDEN_INST1

    def test_inst1_minimal_question(self):
        assert build_inst1("x") == "[IMAGE] To answer the question: x, where is the region of interest in the image?"

    def test_inst1_rejects_empty_or_untrimmed(self):
        with pytest.raises(ValueError):
            build_inst1("")
        with pytest.raises(ValueError):
            build_inst1(" padded ")

    def test_inst2_snapshot(self):
        assert build_inst2("What sport is this?") == GOLDEN_INST2

    def test_inst2_keeps_template_punctuation(self):
        assert build_inst2("Why?").endswith("Answer the question: Why?.")

    def test_inst2_rejects_empty(self):
        with pytest.raises(ValueError):
            build_inst2("")

    def test_bracketed_question_variant(self):
        assert build_inst1("Q", bracket_question=True).startswith(
            "[IMAGE] To answer the question: [Q],"
        )
        assert "Answer the question: [Q]." in build_inst2("Q", bracket_question=True)


class TestBuildConversation:
    def test_full_assembly(self):
        box = RoiBox(0.12, 0.87, 0.2, 0.76, quantized=True)
        conv = build_conversation("What sport is this?", box, "Skiing.")
        assert len(conv.turns) == 4
        assert conv.turns[0].content == GOLDEN_INST1
        assert conv.turns[1].content == "[0.120, 0.870, 0.200, 0.760]"
        assert conv.turns[2].content == GOLDEN_INST2
        assert conv.turns[3].content == "Skiing."

    def test_full_image_box(self):
        conv = build_conversation("Q?", RoiBox(0.0, 1.0, 0.0, 1.0, quantized=True), "A.")
        assert conv.turns[1].content == "[0.000, 1.000, 0.000, 1.000]"

    def test_loss_mask(self):
        conv = build_conversation("Q?", RoiBox(0.0, 1.0, 0.0, 1.0, quantized=True), "A.")
        assert [t.loss for t in conv.turns] == [False, True, False, True]
        assert [t.role for t in conv.turns] == ["user", "assistant", "user", "assistant"]

    def test_unquantized_box_propagates_error(self):
        with pytest.raises(ValueError):
            build_conversation("Q?", RoiBox(0.1234, 1.0, 0.0, 1.0), "A.")

    def test_empty_answer_rejected(self):
        with pytest.raises(ValueError):
            build_conversation("Q?", RoiBox(0.0, 1.0, 0.0, 1.0, quantized=True), "")

    def test_injectivity_over_distinct_triples(self):
        box_a = RoiBox(0.1, 0.9, 0.1, 0.9, quantized=True)
        box_b = RoiBox(0.2, 0.9, 0.1, 0.9, quantized=True)
        triples = [
            ("Q1?", box_a, "A1"),
            ("Q1?", box_a, "A2"),
            ("Q1?", box_b, "A1"),
            ("Q2?", box_a, "A1"),
        ]
        rendered = {str(build_conversation(*t).to_jsonable()) for t in triples}
        assert len(rendered) == len(triples)


class TestLint:
    def good(self):
        return build_conversation("Q?", RoiBox(0.0, 1.0, 0.0, 1.0, quantized=True), "A.")

    def test_accepts_built_conversations(self):
        lint_conversation(self.good())

    def test_rejects_wrong_turn_order(self):
        conv = Conversation(turns=tuple(reversed(self.good().turns)))
        with pytest.raises(ValueError):
            lint_conversation(conv)

    def test_rejects_placeholder_in_assistant_turn(self):
        turns = list(self.good().turns)
        turns[1] = Turn(role="assistant", content="[IMAGE] box", loss=True)
        turns[0] = Turn(role="user", content=turns[0].content.replace("[IMAGE] ", ""), loss=False)
        with pytest.raises(ValueError):
            lint_conversation(Conversation(turns=tuple(turns)))

    def test_rejects_duplicate_placeholder(self):
        turns = list(self.good().turns)
        turns[0] = Turn(role="user", content=turns[0].content + " [IMAGE]", loss=False)
        with pytest.raises(ValueError):
            lint_conversation(Conversation(turns=tuple(turns)))

    def test_rejects_roi_before_image(self):
        turns = list(self.good().turns)
        c0 = turns[0].content.replace("[IMAGE]", "[ROI_IMAGE]")
        c2 = turns[2].content.replace("[ROI_IMAGE]", "[IMAGE]")
        turns[0] = Turn(role="user", content=c0, loss=False)
        turns[2] = Turn(role="user", content=c2, loss=False)
        with pytest.raises(ValueError):
            lint_conversation(Conversation(turns=tuple(turns)))

    def test_rejects_wrong_loss_flags(self):
        turns = list(self.good().turns)
        turns[1] = Turn(role="assistant", content=turns[1].content, loss=False)
        with pytest.raises(ValueError):
            lint_conversation(Conversation(turns=tuple(turns)))
