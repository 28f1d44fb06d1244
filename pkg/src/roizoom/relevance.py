"""Attention primitives and layer-by-layer relevance accumulation.

Input is a dump of per-layer, per-head attention maps and their gradients
over a joint token sequence laid out as [region tokens | text tokens].
Per layer, the head-averaged positive part of grad * attention is folded
into an accumulated relevance matrix, starting from identity; region
scores are then read out of the text rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

ROW_SUM_TOL = 1e-5  # ingest tolerance; dumps may come from float32 exports

Aggregation = Literal["mean", "max"]
ClampMode = Literal["product", "attention"]


class DumpValidationError(ValueError):
    """An attention dump violates one of its structural invariants."""


@dataclass(frozen=True, eq=False)
class AttentionDump:
    """Per-layer attention maps and gradients for one (image, question).

    attn/grad have shape (n_layers, n_heads, N, N) with N = n_regions +
    n_text; indices [0, n_regions) are region tokens, the rest text tokens.
    `grad_target` is free text declaring the scalar the gradients were
    taken against. `d_h` is metadata for toy engines replaying the forward.
    """

    image_id: str
    question_id: str
    n_layers: int
    n_heads: int
    n_regions: int
    n_text: int
    d_h: int
    grad_target: str
    attn: np.ndarray
    grad: np.ndarray
    checksum: str | None = field(default=None, compare=False)

    @property
    def seq_len(self) -> int:
        return self.n_regions + self.n_text

    def validate(self) -> None:
        """Raise DumpValidationError naming the first violated invariant."""
        n = self.seq_len
        if self.n_layers < 1:
            raise DumpValidationError(f"n_layers must be >= 1, got {self.n_layers}")
        if self.n_heads < 1:
            raise DumpValidationError(f"n_heads must be >= 1, got {self.n_heads}")
        if self.n_regions < 0 or self.n_text < 0 or n < 2:
            raise DumpValidationError(
                f"token layout invalid: n_regions={self.n_regions}, n_text={self.n_text}"
            )
        expected = (self.n_layers, self.n_heads, n, n)
        if self.attn.shape != expected:
            raise DumpValidationError(
                f"attn shape {self.attn.shape} != expected {expected}"
            )
        if self.grad.shape != self.attn.shape:
            raise DumpValidationError(
                f"grad shape {self.grad.shape} != attn shape {self.attn.shape}"
            )
        if np.any(self.attn < 0.0) or np.any(self.attn > 1.0):
            layer, head, row, _ = np.unravel_index(
                int(np.argmax((self.attn < 0.0) | (self.attn > 1.0))), self.attn.shape
            )
            raise DumpValidationError(
                f"attn entry outside [0, 1] at layer {layer}, head {head}, row {row}"
            )
        row_sums = self.attn.sum(axis=-1, dtype=np.float64)
        bad = np.abs(row_sums - 1.0) > ROW_SUM_TOL
        if np.any(bad):
            layer, head, row = np.unravel_index(int(np.argmax(bad)), bad.shape)
            raise DumpValidationError(
                f"attn row not stochastic at layer {layer}, head {head}, row {row}: "
                f"sum={row_sums[layer, head, row]:.8f}"
            )


@dataclass(frozen=True, eq=False)
class RelevanceMap:
    """Accumulated relevance over the joint sequence; entries >= 0,
    diagonal >= 1 after propagation from identity."""

    sigma: np.ndarray
    n_regions: int
    n_text: int


@dataclass(frozen=True, eq=False)
class RegionScores:
    """Per-region scores normalized so the maximum is 1 (all zero when no
    relevance flowed)."""

    scores: np.ndarray
    aggregation: Aggregation


def attention_forward(Q: np.ndarray, K: np.ndarray, d_h: int) -> np.ndarray:
    """Row-stochastic attention map softmax(Q K^T / sqrt(d_h))."""
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    if d_h < 1:
        raise ValueError(f"d_h must be >= 1, got {d_h}")
    if Q.shape != K.shape or Q.ndim != 2:
        raise ValueError(f"Q and K must be matrices of equal shape, got {Q.shape} vs {K.shape}")
    scores = Q @ K.T / np.sqrt(d_h)
    scores -= scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(A: np.ndarray, dA: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. pre-softmax scores given row-stochastic A and the
    upstream gradient dA: per row, A * (dA - <dA, A>)."""
    A = np.asarray(A, dtype=np.float64)
    dA = np.asarray(dA, dtype=np.float64)
    if A.shape != dA.shape or A.ndim != 2:
        raise ValueError(f"A and dA must be matrices of equal shape, got {A.shape} vs {dA.shape}")
    inner = (dA * A).sum(axis=1, keepdims=True)
    return A * (dA - inner)


def attention_interpreter(
    attn_layer: np.ndarray,
    grad_layer: np.ndarray,
    clamp: ClampMode = "product",
) -> np.ndarray:
    """Head-averaged positive part of grad * attention for one layer.

    By default the positive clamp is applied to the elementwise product,
    not to the (already positive) attention map, so the result is
    nonnegative. clamp="attention" masks attention entries <= 0 instead
    and can produce negative output; it exists for fidelity experiments.
    """
    attn_layer = np.asarray(attn_layer, dtype=np.float64)
    grad_layer = np.asarray(grad_layer, dtype=np.float64)
    if attn_layer.shape != grad_layer.shape or attn_layer.ndim != 3:
        raise ValueError(
            f"per-layer attn/grad must be (heads, N, N) of equal shape, "
            f"got {attn_layer.shape} vs {grad_layer.shape}"
        )
    if clamp == "product":
        per_head = np.clip(grad_layer * attn_layer, 0.0, None)
    elif clamp == "attention":
        per_head = grad_layer * np.where(attn_layer > 0.0, attn_layer, 0.0)
    else:
        raise ValueError(f"unknown clamp mode {clamp!r}")
    return per_head.mean(axis=0)


def propagate_relevance(dump: AttentionDump, clamp: ClampMode = "product") -> RelevanceMap:
    """Accumulate relevance across layers in forward order.

    Starts from identity and applies sigma <- sigma + psi @ sigma per
    layer, equivalent to the left-product of (I + psi) factors.
    """
    dump.validate()
    n = dump.seq_len
    sigma = np.eye(n, dtype=np.float64)
    for layer in range(dump.n_layers):
        psi = attention_interpreter(dump.attn[layer], dump.grad[layer], clamp=clamp)
        sigma = sigma + psi @ sigma
    return RelevanceMap(sigma=sigma, n_regions=dump.n_regions, n_text=dump.n_text)


def region_scores(rel: RelevanceMap, aggregation: Aggregation = "mean") -> RegionScores:
    """Read region scores out of the text rows of the relevance matrix.

    Raw score of region j aggregates sigma[text rows, j]; scores are then
    divided by their maximum (all zero if the maximum is zero).
    """
    if rel.n_regions < 1 or rel.n_text < 1:
        raise ValueError(
            f"readout needs regions and text tokens, got "
            f"n_regions={rel.n_regions}, n_text={rel.n_text}"
        )
    if aggregation not in ("mean", "max"):
        raise ValueError(f"unknown aggregation {aggregation!r}")
    text_rows = rel.sigma[rel.n_regions :, : rel.n_regions]
    raw = text_rows.mean(axis=0) if aggregation == "mean" else text_rows.max(axis=0)
    peak = raw.max()
    scores = raw / peak if peak > 0.0 else np.zeros_like(raw)
    return RegionScores(scores=scores, aggregation=aggregation)
