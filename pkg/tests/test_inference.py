from __future__ import annotations

import json
import sys

import numpy as np
import pytest

from roizoom.geometry import Raster, write_pnm
from roizoom.inference import (
    InferConfig,
    MockOracle,
    OracleError,
    OracleRequest,
    ScriptExhaustedError,
    StdioOracle,
    run_two_step,
)
from roizoom.prompt import build_inst1, build_inst2
from roizoom.roi import FULL_BOX, RoiBox

RESPONDER = """
import json, sys
script = json.loads(sys.argv[1])
for entry in script:
    line = sys.stdin.readline()
    if not line:
        break
    if entry == "__raw_garbage__":
        print("this is not json", flush=True)
    elif entry == "__exit__":
        sys.exit(0)
    elif entry == "__hang__":
        import time; time.sleep(60)
    elif entry == "__echo__":
        req = json.loads(line)
        print(json.dumps({"text": req["prompt"]}), flush=True)
    else:
        print(json.dumps({"text": entry}), flush=True)
"""


def responder_cmd(script: list[str]) -> list[str]:
    return [sys.executable, "-u", "-c", RESPONDER, json.dumps(script)]


@pytest.fixture
def image(tmp_path):
    rng = np.random.default_rng(7)
    img = Raster.from_array(rng.integers(0, 256, size=(24, 24, 3), dtype=np.uint8))
    path = tmp_path / "scene.ppm"
    write_pnm(img, path)
    return path


def small_config(tmp_path) -> InferConfig:
    return InferConfig(resolution=16, roi_path=str(tmp_path / "roi.ppm"))


class TestRunTwoStep:
    def test_scripted_box_case(self, image, tmp_path):
        oracle = MockOracle(["[0.250, 0.750, 0.250, 0.750]", "skiing"])
        t = run_two_step(oracle, image, "What sport is this?", small_config(tmp_path))
        assert t.parsed_box == RoiBox(0.25, 0.75, 0.25, 0.75, quantized=True)
        assert not t.fallback_used
        assert t.fallback_reason is None
        assert t.final_answer == "skiing"
        assert t.raw_ans1 == "[0.250, 0.750, 0.250, 0.750]"

    def test_no_box_falls_back_to_full_image(self, image, tmp_path):
        oracle = MockOracle(["I cannot tell where to look.", "a street"])
        t = run_two_step(oracle, image, "What is this?", small_config(tmp_path))
        assert t.fallback_used
        assert t.parsed_box == FULL_BOX
        assert "NoBox" in t.fallback_reason
        assert t.final_answer == "a street"

    def test_invalid_box_falls_back_with_reason(self, image, tmp_path):
        oracle = MockOracle(["[0.9, 0.1, 0, 1]", "a dog"])
        t = run_two_step(oracle, image, "What animal?", small_config(tmp_path))
        assert t.fallback_used
        assert t.parsed_box == FULL_BOX
        assert "InvalidBox" in t.fallback_reason
        assert t.final_answer == "a dog"

    def test_protocol_ordering_and_image_lists(self, image, tmp_path):
        oracle = MockOracle(["[0.250, 0.750, 0.250, 0.750]", "ok"])
        config = small_config(tmp_path)
        run_two_step(oracle, image, "Q?", config)
        assert [r.step for r in oracle.requests] == ["locate", "answer"]
        assert oracle.requests[0].images == (str(image),)
        assert oracle.requests[1].images == (str(image), config.roi_path)

    def test_prompt_fidelity(self, image, tmp_path):
        oracle = MockOracle(["[0.250, 0.750, 0.250, 0.750]", "ok"])
        run_two_step(oracle, image, "What sport is this?", small_config(tmp_path))
        assert oracle.requests[0].prompt == build_inst1("What sport is this?")
        assert oracle.requests[1].prompt == build_inst2("What sport is this?")

    def test_roi_crop_written_at_resolution(self, image, tmp_path):
        config = small_config(tmp_path)
        run_two_step(MockOracle(["[0.250, 0.750, 0.250, 0.750]", "ok"]), image, "Q?", config)
        from roizoom.geometry import read_pnm

        roi = read_pnm(config.roi_path)
        assert (roi.width, roi.height) == (16, 16)

    def test_deterministic_transcripts_with_mock(self, image, tmp_path):
        def run():
            return run_two_step(
                MockOracle(["[0.100, 0.900, 0.100, 0.900]", "yes"]),
                image,
                "Q?",
                small_config(tmp_path),
            )

        a, b = run(), run()
        ja, jb = a.to_jsonable(), b.to_jsonable()
        ja.pop("timing"), jb.pop("timing")
        assert ja == jb

    def test_margin_on_parse_extends_box(self, image, tmp_path):
        config = InferConfig(resolution=16, roi_path=str(tmp_path / "r.ppm"), margin_on_parse=0.05)
        t = run_two_step(MockOracle(["[0.250, 0.750, 0.250, 0.750]", "ok"]), image, "Q?", config)
        assert t.parsed_box == RoiBox(0.2, 0.8, 0.2, 0.8, quantized=True)


class TestMockOracle:
    def test_script_exhaustion(self):
        oracle = MockOracle(["only one"])
        oracle.ask(OracleRequest(step="locate", prompt="p", images=("x",)))
        with pytest.raises(ScriptExhaustedError):
            oracle.ask(OracleRequest(step="locate", prompt="p", images=("x",)))

    def test_request_shape_validation(self):
        with pytest.raises(ValueError):
            OracleRequest(step="locate", prompt="p", images=("a", "b"))
        with pytest.raises(ValueError):
            OracleRequest(step="answer", prompt="p", images=("a",))


class TestStdioOracle:
    def ask_locate(self, oracle, prompt="hello"):
        return oracle.ask(OracleRequest(step="locate", prompt=prompt, images=("img.ppm",)))

    def test_responses_surfaced_verbatim(self):
        with StdioOracle(responder_cmd(["first", "second"])) as oracle:
            assert self.ask_locate(oracle) == "first"
            assert self.ask_locate(oracle) == "second"

    def test_request_line_is_json_protocol(self):
        with StdioOracle(responder_cmd(["__echo__"])) as oracle:
            assert self.ask_locate(oracle, prompt="round trip") == "round trip"

    def test_non_json_response_is_protocol_error(self):
        with StdioOracle(responder_cmd(["__raw_garbage__"])) as oracle:
            with pytest.raises(OracleError) as err:
                self.ask_locate(oracle)
            assert err.value.kind == "protocol"
            assert "not json" in str(err.value)

    def test_exit_mid_dialogue_is_transport_error(self):
        with StdioOracle(responder_cmd(["only", "__exit__"])) as oracle:
            assert self.ask_locate(oracle) == "only"
            with pytest.raises(OracleError) as err:
                self.ask_locate(oracle)
            assert err.value.kind == "transport"

    def test_timeout(self):
        with StdioOracle(responder_cmd(["__hang__"]), timeout=0.3) as oracle:
            with pytest.raises(OracleError) as err:
                self.ask_locate(oracle)
            assert err.value.kind == "timeout"

    def test_transport_failure_preserves_partial_transcript(self, image, tmp_path):
        oracle = StdioOracle(responder_cmd(["[0.250, 0.750, 0.250, 0.750]", "__exit__"]))
        try:
            with pytest.raises(OracleError) as err:
                run_two_step(oracle, image, "Q?", small_config(tmp_path))
        finally:
            oracle.close()
        partial = err.value.partial
        assert partial["inst1"] == build_inst1("Q?")
        assert partial["raw_ans1"] == "[0.250, 0.750, 0.250, 0.750]"
        assert "inst2" in partial
