"""Region-of-interest boxes: selection, geometry on normalized coordinates,
and the exact bounding-box string grammar used in locate-step answers.

Boxes are axis-aligned rectangles in normalized [0,1] image coordinates,
stored as (w0, w1, h0, h1): left/right width bounds, then top/bottom height
bounds. Coordinates quantized to the 0.001 grid are the canonical currency
of the pipeline; `encode_ans1` refuses unquantized boxes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_UP, Decimal


class Ans1ParseError(Exception):
    """Base for locate-answer parse failures; `reason` carries detail."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class NoBoxError(Ans1ParseError):
    """No bracketed 4-float group found in the text."""


class InvalidBoxError(Ans1ParseError):
    """A 4-float group was found but violates box invariants."""


def _round3(x: float) -> float:
    # Decimal round-half-up; str() keeps the shortest repr so 0.4995 stays .4995
    return float(Decimal(str(x)).quantize(Decimal("0.001"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class RoiBox:
    """Normalized rectangle; bounds must satisfy 0 <= w0 < w1 <= 1 and
    0 <= h0 < h1 <= 1. `quantized` marks coordinates on the 0.001 grid."""

    w0: float
    w1: float
    h0: float
    h1: float
    quantized: bool = False

    def __post_init__(self):
        if not (0.0 <= self.w0 < self.w1 <= 1.0):
            raise ValueError(f"invalid width bounds: w0={self.w0}, w1={self.w1}")
        if not (0.0 <= self.h0 < self.h1 <= 1.0):
            raise ValueError(f"invalid height bounds: h0={self.h0}, h1={self.h1}")
        if self.quantized:
            for name, v in self.coords().items():
                if _round3(v) != v:
                    raise ValueError(f"coordinate {name}={v} is off the 0.001 grid")

    def coords(self) -> dict[str, float]:
        return {"w0": self.w0, "w1": self.w1, "h0": self.h0, "h1": self.h1}

    def area(self) -> float:
        return (self.w1 - self.w0) * (self.h1 - self.h0)

    def contains(self, other: "RoiBox") -> bool:
        return (
            self.w0 <= other.w0
            and self.w1 >= other.w1
            and self.h0 <= other.h0
            and self.h1 >= other.h1
        )


FULL_BOX = RoiBox(0.0, 1.0, 0.0, 1.0, quantized=True)


@dataclass(frozen=True)
class RegionCatalog:
    """Detected-region boxes for one image, already normalized, plus the
    source pixel dimensions they were derived from."""

    boxes: tuple[RoiBox, ...]
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("catalog dimensions must be >= 1 px")


def threshold_mask(scores, epsilon: float) -> list[bool]:
    """Select regions whose normalized score reaches `epsilon`.

    Never returns an all-false mask: if no score passes, the argmax region
    (first index on ties) is force-selected.
    """
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must be in (0, 1], got {epsilon}")
    values = list(scores)
    mask = [s >= epsilon for s in values]
    if not any(mask):
        mask[values.index(max(values))] = True
    return mask


def union_bbox(catalog: RegionCatalog, mask) -> RoiBox:
    """Tight axis-aligned union of the selected catalog boxes."""
    selected = [box for box, keep in zip(catalog.boxes, mask) if keep]
    if not selected:
        raise ValueError("mask selects no region")
    return RoiBox(
        w0=min(b.w0 for b in selected),
        w1=max(b.w1 for b in selected),
        h0=min(b.h0 for b in selected),
        h1=max(b.h1 for b in selected),
    )


def extend_clamp(box: RoiBox, margin: float) -> RoiBox:
    """Grow the box outward by `margin` on every side, clamping to [0,1]."""
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    return RoiBox(
        w0=max(0.0, box.w0 - margin),
        w1=min(1.0, box.w1 + margin),
        h0=max(0.0, box.h0 - margin),
        h1=min(1.0, box.h1 + margin),
    )


def quantize(box: RoiBox) -> RoiBox:
    """Round coordinates half-up to 3 decimals.

    If rounding collapses an axis, the upper bound is widened by 0.001 (or
    the lower bound lowered when already at 1.0) so the result stays a
    valid box.
    """
    w0, w1 = _anti_collapse(_round3(box.w0), _round3(box.w1))
    h0, h1 = _anti_collapse(_round3(box.h0), _round3(box.h1))
    return RoiBox(w0, w1, h0, h1, quantized=True)


def _anti_collapse(lo: float, hi: float) -> tuple[float, float]:
    if lo < hi:
        return lo, hi
    if hi >= 1.0:
        return _round3(1.0 - 0.001), 1.0
    return lo, _round3(hi + 0.001)


def encode_ans1(box: RoiBox) -> str:
    """Render the canonical locate answer: `[w0, w1, h0, h1]`, each with
    exactly three decimals."""
    if not box.quantized:
        raise ValueError("encode_ans1 requires a quantized box")
    return f"[{box.w0:.3f}, {box.w1:.3f}, {box.h0:.3f}, {box.h1:.3f}]"


# one coordinate: integer, or 1-3 decimal digits, optional sign so that
# out-of-range values fail validation (InvalidBox) instead of the grammar
_FLOAT = r"[+-]?(?:\d+\.\d{1,3}|\.\d{1,3}|\d+)"
_GROUP_RE = re.compile(
    r"\[\s*({f})\s*,\s*({f})\s*,\s*({f})\s*,\s*({f})\s*\]".format(f=_FLOAT)
)


def parse_ans1(text: str) -> RoiBox:
    """Extract a box from generated text.

    Accepts the canonical format plus tolerant variants (surrounding prose,
    flexible whitespace, 1-3 decimal digits). The first bracketed 4-float
    group wins; it is quantized and then validated.

    Raises NoBoxError if no group is present, InvalidBoxError if the first
    group violates range or ordering invariants.
    """
    m = _GROUP_RE.search(text)
    if m is None:
        raise NoBoxError("no bracketed 4-float group in text")
    w0, w1, h0, h1 = (_round3(float(g)) for g in m.groups())
    for name, v in (("w0", w0), ("w1", w1), ("h0", h0), ("h1", h1)):
        if not 0.0 <= v <= 1.0:
            raise InvalidBoxError(f"{name}={v} outside [0, 1]")
    if w0 >= w1:
        raise InvalidBoxError(f"w0={w0} >= w1={w1}")
    if h0 >= h1:
        raise InvalidBoxError(f"h0={h0} >= h1={h1}")
    return RoiBox(w0, w1, h0, h1, quantized=True)


def mark_quantized(box: RoiBox) -> RoiBox:
    """Flag a box already on the 0.001 grid (validates grid alignment)."""
    return replace(box, quantized=True)
