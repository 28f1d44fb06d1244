"""Interactive two-step inference driver.

Step one asks the model oracle to locate the region of interest for a
question; the answer is parsed into a box (falling back to the full image
when the text yields no usable box), the region is cropped and zoomed, and
step two asks for the final answer with both images attached. The oracle
is any object mapping (step, prompt, image paths) to text; a line-JSON
subprocess oracle and a scripted mock are provided.
"""

from __future__ import annotations

import json
import os
import select
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import geometry
from .prompt import build_inst1, build_inst2
from .roi import FULL_BOX, Ans1ParseError, RoiBox, extend_clamp, parse_ans1, quantize


class OracleError(Exception):
    """Oracle transport or protocol failure; `kind` is one of
    "timeout", "protocol", "transport"; `partial` holds transcript fields
    gathered before the failure."""

    def __init__(self, kind: str, message: str, partial: dict | None = None):
        super().__init__(f"{kind}: {message}")
        self.kind = kind
        self.partial = partial or {}


class ScriptExhaustedError(Exception):
    """The mock oracle ran out of scripted responses."""


@dataclass(frozen=True)
class OracleRequest:
    step: str  # "locate" | "answer"
    prompt: str
    images: tuple[str, ...]

    def __post_init__(self):
        if self.step == "locate" and len(self.images) != 1:
            raise ValueError("locate request carries exactly 1 image")
        if self.step == "answer" and len(self.images) != 2:
            raise ValueError("answer request carries exactly 2 images (original, ROI)")

    def to_jsonable(self) -> dict:
        return {"step": self.step, "prompt": self.prompt, "images": list(self.images)}


@dataclass(frozen=True)
class OracleTranscript:
    inst1: str
    raw_ans1: str
    parsed_box: RoiBox
    fallback_used: bool
    fallback_reason: str | None
    inst2: str
    final_answer: str
    timing: dict = field(compare=False)

    def to_jsonable(self) -> dict:
        return {
            "inst1": self.inst1,
            "raw_ans1": self.raw_ans1,
            "parsed_box": [self.parsed_box.w0, self.parsed_box.w1, self.parsed_box.h0, self.parsed_box.h1],
            "fallback_used": self.fallback_used,
            "fallback_reason": self.fallback_reason,
            "inst2": self.inst2,
            "final_answer": self.final_answer,
            "timing": self.timing,
        }


@dataclass(frozen=True)
class InferConfig:
    resolution: int = geometry.DEFAULT_RESOLUTION
    margin_on_parse: float | None = None  # extension is assumed learned by the model
    roi_path: str | None = None  # where to write the cropped region (temp file if None)


def run_two_step(oracle, image_path: str | Path, question: str, config: InferConfig = InferConfig()) -> OracleTranscript:
    """Drive the locate -> crop -> answer interaction and return the full
    transcript. Parse failures never abort the run: the full-image box is
    substituted and flagged."""
    image_path = str(image_path)
    partial: dict = {}
    timing: dict = {}

    inst1 = build_inst1(question)
    partial["inst1"] = inst1
    t0 = time.perf_counter()
    raw_ans1 = _ask(oracle, OracleRequest(step="locate", prompt=inst1, images=(image_path,)), partial)
    timing["locate"] = time.perf_counter() - t0
    partial["raw_ans1"] = raw_ans1

    fallback_reason = None
    try:
        box = parse_ans1(raw_ans1)
    except Ans1ParseError as e:
        box = FULL_BOX
        fallback_reason = f"{type(e).__name__}: {e.reason}"
    if config.margin_on_parse is not None and fallback_reason is None:
        box = quantize(extend_clamp(box, config.margin_on_parse))

    img = geometry.read_image(image_path)
    roi_img = geometry.crop_roi(img, box, resolution=config.resolution)
    roi_path = config.roi_path
    if roi_path is None:
        fd, roi_path = tempfile.mkstemp(suffix=".ppm", prefix="roi_")
        os.close(fd)
    geometry.write_image(roi_img, roi_path)

    inst2 = build_inst2(question)
    partial["inst2"] = inst2
    t1 = time.perf_counter()
    final = _ask(
        oracle,
        OracleRequest(step="answer", prompt=inst2, images=(image_path, str(roi_path))),
        partial,
    )
    timing["answer"] = time.perf_counter() - t1

    return OracleTranscript(
        inst1=inst1,
        raw_ans1=raw_ans1,
        parsed_box=box,
        fallback_used=fallback_reason is not None,
        fallback_reason=fallback_reason,
        inst2=inst2,
        final_answer=final,
        timing=timing,
    )


def _ask(oracle, request: OracleRequest, partial: dict) -> str:
    try:
        return oracle.ask(request)
    except OracleError as e:
        raise OracleError(e.kind, str(e), partial={**partial, **e.partial}) from e


class MockOracle:
    """Plays back a fixed response script and records every request."""

    def __init__(self, script):
        self.script = list(script)
        self.requests: list[OracleRequest] = []
        self._cursor = 0

    def ask(self, request: OracleRequest) -> str:
        self.requests.append(request)
        if self._cursor >= len(self.script):
            raise ScriptExhaustedError(
                f"mock oracle exhausted after {len(self.script)} responses"
            )
        response = self.script[self._cursor]
        self._cursor += 1
        return response


class StdioOracle:
    """Line-delimited JSON oracle over a subprocess.

    Each request is one line {"step", "prompt", "images"}; the process must
    reply with one line {"text"}. A single request is in flight at a time.
    """

    def __init__(self, command, timeout: float = 30.0):
        self.command = command
        self.timeout = timeout
        try:
            self._proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                bufsize=0,
            )
        except OSError as e:
            raise OracleError("transport", f"cannot launch oracle {command!r}: {e}") from e
        self._buffer = b""

    def ask(self, request: OracleRequest) -> str:
        line = json.dumps(request.to_jsonable(), separators=(",", ":")) + "\n"
        try:
            self._proc.stdin.write(line.encode("utf-8"))
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise OracleError("transport", f"oracle process closed stdin: {e}") from e
        reply = self._read_line()
        try:
            obj = json.loads(reply)
            text = obj["text"]
        except (json.JSONDecodeError, TypeError, KeyError) as e:
            raise OracleError(
                "protocol", f"bad response line {reply.decode('utf-8', 'replace')!r}: {e}"
            ) from e
        if not isinstance(text, str):
            raise OracleError("protocol", f'response "text" must be a string, got {type(text).__name__}')
        return text

    def _read_line(self) -> bytes:
        deadline = time.monotonic() + self.timeout
        fd = self._proc.stdout.fileno()
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise OracleError("timeout", f"no response within {self.timeout}s")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                raise OracleError("timeout", f"no response within {self.timeout}s")
            chunk = os.read(fd, 65536)
            if not chunk:
                raise OracleError("transport", "oracle process closed stdout mid-dialogue")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
