"""File formats and the annotation pipeline.

Defines the binary attention-dump interchange format, the region-catalog
and QA input schemas, the annotated-record JSONL output, and the
deterministic per-epoch QA sampler. `annotate` joins one dump, one region
catalog, and one QA pair into a training record.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .prompt import Conversation, Turn, build_conversation, lint_conversation
from .relevance import (
    AttentionDump,
    Aggregation,
    propagate_relevance,
    region_scores,
)
from .roi import RegionCatalog, RoiBox, extend_clamp, quantize, threshold_mask, union_bbox

DUMP_MAGIC = b"COSATTN1"
_HEADER_KEYS = (
    "image_id",
    "question_id",
    "n_layers",
    "n_heads",
    "n_regions",
    "n_text",
    "d_h",
    "grad_target",
)
_RECORD_KEYS = (
    "image_id",
    "image_path",
    "question",
    "answer",
    "roi",
    "conversation",
    "provenance",
)


class FormatError(Exception):
    """File is not an attention dump (bad magic or malformed header)."""


class TruncationError(Exception):
    """File ends before the declared payload does."""


class JoinError(Exception):
    """Dump, catalog, and QA inputs do not belong together."""


class ParseError(Exception):
    """A record line could not be parsed; `line_number` is 1-based."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class QaPair:
    image_id: str
    question: str
    answer: str

    def __post_init__(self):
        if not self.image_id or not self.question or not self.answer:
            raise ValueError("QA fields must be nonempty")


@dataclass(frozen=True)
class AnnotateConfig:
    epsilon: float = 0.5
    margin: float = 0.05
    aggregation: Aggregation = "mean"


@dataclass(frozen=True)
class AnnotatedRecord:
    image_id: str
    image_path: str
    question: str
    answer: str
    roi: RoiBox
    conversation: Conversation
    provenance: dict


# --- attention dump files ---------------------------------------------------


def write_dump(dump: AttentionDump, path: str | Path) -> str:
    """Serialize a validated dump; returns the sha256 of the written bytes.

    Layout: 8-byte magic, u32-LE header length, UTF-8 JSON header, then per
    layer the attention and gradient tensors as little-endian float32,
    head-major row-major.
    """
    dump.validate()
    header = {
        "image_id": dump.image_id,
        "question_id": dump.question_id,
        "n_layers": dump.n_layers,
        "n_heads": dump.n_heads,
        "n_regions": dump.n_regions,
        "n_text": dump.n_text,
        "d_h": dump.d_h,
        "grad_target": dump.grad_target,
    }
    header_bytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    chunks = [DUMP_MAGIC, struct.pack("<I", len(header_bytes)), header_bytes]
    for layer in range(dump.n_layers):
        for tensor in (dump.attn, dump.grad):
            chunks.append(np.ascontiguousarray(tensor[layer], dtype="<f4").tobytes())
    blob = b"".join(chunks)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def read_dump(path: str | Path) -> AttentionDump:
    """Parse and validate an attention dump file.

    Raises FormatError on bad magic or header, TruncationError when the
    payload is shorter than the header declares, and DumpValidationError
    (naming layer/head/row) for non-stochastic attention rows.
    """
    data = Path(path).read_bytes()
    if data[:8] != DUMP_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:8]!r}, expected {DUMP_MAGIC!r}")
    if len(data) < 12:
        raise TruncationError(f"{path}: file ends at byte {len(data)}, header length missing")
    (header_len,) = struct.unpack("<I", data[8:12])
    header_end = 12 + header_len
    if len(data) < header_end:
        raise TruncationError(
            f"{path}: header declared up to byte {header_end}, file ends at {len(data)}"
        )
    try:
        header = json.loads(data[12:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: header is not valid JSON: {e}") from e
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise FormatError(f"{path}: header missing keys {missing}")
    try:
        n_layers, n_heads = int(header["n_layers"]), int(header["n_heads"])
        n = int(header["n_regions"]) + int(header["n_text"])
        int(header["d_h"])
    except (TypeError, ValueError) as e:
        raise FormatError(f"{path}: bad header field: {e}") from e
    if n_layers < 1 or n_heads < 1 or n < 2:
        raise FormatError(
            f"{path}: header declares impossible shape "
            f"(layers={n_layers}, heads={n_heads}, N={n})"
        )
    expected_floats = n_layers * 2 * n_heads * n * n
    expected_end = header_end + expected_floats * 4
    if len(data) != expected_end:
        raise TruncationError(
            f"{path}: payload should end at byte {expected_end}, file has {len(data)} bytes"
        )
    flat = np.frombuffer(data, dtype="<f4", offset=header_end)
    per_layer = flat.reshape(n_layers, 2, n_heads, n, n)
    dump = AttentionDump(
        image_id=str(header["image_id"]),
        question_id=str(header["question_id"]),
        n_layers=n_layers,
        n_heads=n_heads,
        n_regions=int(header["n_regions"]),
        n_text=int(header["n_text"]),
        d_h=int(header["d_h"]),
        grad_target=str(header["grad_target"]),
        attn=np.ascontiguousarray(per_layer[:, 0]),
        grad=np.ascontiguousarray(per_layer[:, 1]),
        checksum=hashlib.sha256(data).hexdigest(),
    )
    dump.validate()
    return dump


# --- catalogs and QA inputs -------------------------------------------------


def read_catalogs(path: str | Path) -> dict[str, RegionCatalog]:
    """Read region catalogs keyed by image id.

    The file holds one catalog object {image_id, width, height, regions}
    or a JSON array of them; regions are [w0, w1, h0, h1] rows.
    """
    raw = json.loads(Path(path).read_text("utf-8"))
    entries = raw if isinstance(raw, list) else [raw]
    catalogs: dict[str, RegionCatalog] = {}
    for entry in entries:
        boxes = tuple(RoiBox(*(float(v) for v in r)) for r in entry["regions"])
        catalogs[str(entry["image_id"])] = RegionCatalog(
            boxes=boxes, width=int(entry["width"]), height=int(entry["height"])
        )
    return catalogs


def read_qa(path: str | Path) -> list[QaPair]:
    """Read QA pairs from JSONL lines {image_id, question, answer}."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                pairs.append(
                    QaPair(
                        image_id=str(obj["image_id"]),
                        question=str(obj["question"]),
                        answer=str(obj["answer"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, ValueError) as e:
                raise ParseError(i, f"bad QA line: {e}") from e
    return pairs


def group_by_image(pairs: list[QaPair]) -> dict[str, list[QaPair]]:
    """Group QA pairs by image id, preserving first-appearance order."""
    groups: dict[str, list[QaPair]] = {}
    for p in pairs:
        groups.setdefault(p.image_id, []).append(p)
    return groups


# --- sampling ---------------------------------------------------------------


def sample_index(image_id: str, count: int, epoch: int, seed: int) -> int:
    """Deterministic uniform index in [0, count): a keyed hash of
    (seed, image_id, epoch) reduced modulo the count, identical across
    runs and platforms."""
    if count < 1:
        raise ValueError("cannot sample from an empty QA list")
    key = f"{seed}:{image_id}:{epoch}".encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "little") % count


def sample_one_qa(pairs: list[QaPair], epoch: int, seed: int) -> QaPair:
    """Pick one QA pair for an image, uniformly and reproducibly."""
    if not pairs:
        raise ValueError("cannot sample from an empty QA list")
    return pairs[sample_index(pairs[0].image_id, len(pairs), epoch, seed)]


# --- annotation -------------------------------------------------------------


def annotate(
    dump: AttentionDump,
    catalog: RegionCatalog,
    qa: QaPair,
    config: AnnotateConfig = AnnotateConfig(),
    image_path: str | None = None,
) -> AnnotatedRecord:
    """Join one dump, catalog, and QA pair into a training record.

    The ROI is the quantized, margin-extended union of the regions whose
    relevance score passes the threshold.
    """
    if dump.image_id != qa.image_id:
        raise JoinError(f"dump image {dump.image_id!r} != QA image {qa.image_id!r}")
    if dump.n_regions != len(catalog.boxes):
        raise JoinError(
            f"dump has {dump.n_regions} regions, catalog has {len(catalog.boxes)}"
        )
    scores = region_scores(propagate_relevance(dump), config.aggregation)
    mask = threshold_mask(scores.scores, config.epsilon)
    box = quantize(extend_clamp(union_bbox(catalog, mask), config.margin))
    conversation = build_conversation(qa.question, box, qa.answer)
    return AnnotatedRecord(
        image_id=qa.image_id,
        image_path=image_path if image_path is not None else qa.image_id,
        question=qa.question,
        answer=qa.answer,
        roi=box,
        conversation=conversation,
        provenance={
            "epsilon": config.epsilon,
            "margin": config.margin,
            "aggregation": config.aggregation,
            "dump_sha256": dump.checksum,
        },
    )


# --- record serialization ----------------------------------------------------


def _roi_json(box: RoiBox) -> str:
    return f"[{box.w0:.3f}, {box.w1:.3f}, {box.h0:.3f}, {box.h1:.3f}]"


def record_to_line(rec: AnnotatedRecord) -> str:
    """One JSONL line with fixed key order and 3-decimal ROI numbers."""
    parts = []
    values = {
        "image_id": json.dumps(rec.image_id),
        "image_path": json.dumps(rec.image_path),
        "question": json.dumps(rec.question),
        "answer": json.dumps(rec.answer),
        "roi": _roi_json(rec.roi),
        "conversation": json.dumps(rec.conversation.to_jsonable()),
        "provenance": json.dumps(rec.provenance),
    }
    for key in _RECORD_KEYS:
        parts.append(f"{json.dumps(key)}: {values[key]}")
    return "{" + ", ".join(parts) + "}"


def write_records(records, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(record_to_line(rec) + "\n")


def parse_record_line(line: str, line_number: int) -> AnnotatedRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise ParseError(line_number, f"invalid JSON: {e}") from e
    if not isinstance(obj, dict) or set(obj) != set(_RECORD_KEYS):
        raise ParseError(
            line_number,
            f"record keys must be exactly {sorted(_RECORD_KEYS)}, "
            f"got {sorted(obj) if isinstance(obj, dict) else type(obj).__name__}",
        )
    try:
        roi_values = obj["roi"]
        if len(roi_values) != 4:
            raise ValueError(f"roi must have 4 coordinates, got {len(roi_values)}")
        roi = RoiBox(*(float(v) for v in roi_values), quantized=True)
        turns = tuple(
            Turn(role=str(t["role"]), content=str(t["content"]), loss=bool(t["loss"]))
            for t in obj["conversation"]
        )
        conversation = Conversation(turns=turns)
        lint_conversation(conversation)
        return AnnotatedRecord(
            image_id=str(obj["image_id"]),
            image_path=str(obj["image_path"]),
            question=str(obj["question"]),
            answer=str(obj["answer"]),
            roi=roi,
            conversation=conversation,
            provenance=dict(obj["provenance"]),
        )
    except (TypeError, KeyError, ValueError) as e:
        raise ParseError(line_number, str(e)) from e


def read_records(path: str | Path) -> list[AnnotatedRecord]:
    """Inverse of write_records; raises ParseError with the failing line."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            records.append(parse_record_line(line, i))
    return records
