from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from roizoom.relevance import AttentionDump, attention_forward

DATA_DIR = Path(__file__).parent / "data"


def random_dump(
    rng: np.random.Generator,
    n_layers: int,
    n_heads: int,
    n_regions: int,
    n_text: int,
    image_id: str = "img",
    question_id: str = "0",
    d_h: int = 4,
) -> AttentionDump:
    """Random valid dump: attention from softmax of random scores, gradients
    standard normal, both stored at interchange precision (float32)."""
    n = n_regions + n_text
    attn = np.empty((n_layers, n_heads, n, n), dtype=np.float32)
    for layer in range(n_layers):
        for head in range(n_heads):
            q = rng.normal(size=(n, d_h))
            k = rng.normal(size=(n, d_h))
            attn[layer, head] = attention_forward(q, k, d_h).astype(np.float32)
    grad = rng.normal(size=(n_layers, n_heads, n, n)).astype(np.float32)
    return AttentionDump(
        image_id=image_id,
        question_id=question_id,
        n_layers=n_layers,
        n_heads=n_heads,
        n_regions=n_regions,
        n_text=n_text,
        d_h=d_h,
        grad_target="sum of log-probabilities of ground-truth answer tokens",
        attn=attn,
        grad=grad,
    )


def dump_from_arrays(attn, grad, n_regions, n_text, **kwargs) -> AttentionDump:
    """Dump around explicit float arrays (converted to float32)."""
    attn = np.asarray(attn, dtype=np.float32)
    grad = np.asarray(grad, dtype=np.float32)
    fields = dict(
        image_id="img",
        question_id="0",
        n_layers=attn.shape[0],
        n_heads=attn.shape[1],
        n_regions=n_regions,
        n_text=n_text,
        d_h=4,
        grad_target="test target",
        attn=attn,
        grad=grad,
    )
    fields.update(kwargs)
    return AttentionDump(**fields)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240901)
