"""Regenerate the committed annotate fixture (dumps, catalog, QA, image).

The golden records file is NOT written here: it is frozen CLI output whose
ROI values were verified by hand (see test_acceptance.py for the derivations).
Run from the repository root:  python3 tests/data/annotate_fixture/generate.py
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from roizoom.dataset import write_dump
from roizoom.geometry import Raster, write_pnm
from roizoom.relevance import AttentionDump

HERE = Path(__file__).parent
GRAD_TARGET = "sum of log-probabilities of ground-truth answer tokens"


def dump(image_id, question_id, attn, grad, n_regions, n_text):
    return AttentionDump(
        image_id=image_id,
        question_id=question_id,
        n_layers=attn.shape[0],
        n_heads=attn.shape[1],
        n_regions=n_regions,
        n_text=n_text,
        d_h=4,
        grad_target=GRAD_TARGET,
        attn=np.asarray(attn, dtype=np.float32),
        grad=np.asarray(grad, dtype=np.float32),
    )


def img_a():
    # 1 region, zero gradients: scores all 0, argmax fallback selects region 0
    attn = np.full((1, 1, 2, 2), 0.5)
    grad = np.zeros((1, 1, 2, 2))
    return dump("imgA", "0", attn, grad, 1, 1)


def img_b():
    # 2-layer single-head dominance example: text row pushes all relevance
    # onto region 2 (hand-derived sigma row: [0, 0, 3, 1])
    attn = np.full((2, 1, 4, 4), 0.25)
    grad = np.zeros((2, 1, 4, 4))
    grad[0, 0, 3] = [0.0, 0.0, 4.0, 0.0]
    grad[1, 0, 3] = [0.0, 0.0, 8.0, 0.0]
    return dump("imgB", "0", attn, grad, 3, 1)


def img_c(question_id, region):
    # single layer, gradient concentrated on one region
    attn = np.full((1, 1, 3, 3), 1.0 / 3.0)
    grad = np.zeros((1, 1, 3, 3))
    grad[0, 0, 2, region] = 3.0
    return dump("imgC", question_id, attn, grad, 2, 1)


def main():
    dumps_dir = HERE / "dumps"
    dumps_dir.mkdir(exist_ok=True)
    for d in (img_a(), img_b(), img_c("0", 0), img_c("1", 1)):
        write_dump(d, dumps_dir / f"{d.image_id}__{d.question_id}.cosattn")

    (HERE / "regions.json").write_text(
        json.dumps(
            [
                {"image_id": "imgA", "width": 640, "height": 480,
                 "regions": [[0.2, 0.8, 0.2, 0.8]]},
                {"image_id": "imgB", "width": 640, "height": 480,
                 "regions": [[0.0, 0.2, 0.0, 0.2], [0.4, 0.6, 0.4, 0.6], [0.3, 0.7, 0.1, 0.9]]},
                {"image_id": "imgC", "width": 512, "height": 512,
                 "regions": [[0.1, 0.4, 0.1, 0.4], [0.6, 0.9, 0.6, 0.9]]},
            ],
            indent=2,
        )
        + "\n"
    )

    qa_lines = [
        {"image_id": "imgA", "question": "What sport is this?", "answer": "Skiing."},
        {"image_id": "imgB", "question": "What are these people doing?", "answer": "Eating."},
        {"image_id": "imgC", "question": "Where is the cat?", "answer": "On the sofa."},
        {"image_id": "imgC", "question": "What color is the wall?", "answer": "Blue."},
    ]
    (HERE / "qa.jsonl").write_text(
        "".join(json.dumps(q) + "\n" for q in qa_lines)
    )

    # deterministic image used by the infer goldens
    rng = np.random.default_rng(20240901)
    img = Raster.from_array(rng.integers(0, 256, size=(24, 24, 3), dtype=np.uint8))
    write_pnm(img, HERE.parent / "infer_image.ppm")
    print("fixture written")


if __name__ == "__main__":
    main()
