from __future__ import annotations

import numpy as np
import pytest

from roizoom.dataset import AnnotatedRecord
from roizoom.prompt import build_conversation
from roizoom.roi import RoiBox
from roizoom.stats import aggregate_heatmap, area_stats, heatmap_to_csv, heatmap_to_pgm


def record_with_roi(w0, w1, h0, h1, image_id="img") -> AnnotatedRecord:
    box = RoiBox(w0, w1, h0, h1, quantized=True)
    return AnnotatedRecord(
        image_id=image_id,
        image_path=image_id,
        question="Q?",
        answer="A.",
        roi=box,
        conversation=build_conversation("Q?", box, "A."),
        provenance={"epsilon": 0.5, "margin": 0.05, "aggregation": "mean", "dump_sha256": "0" * 64},
    )


class TestHeatmap:
    def test_full_box_covers_grid(self):
        hm = aggregate_heatmap([record_with_roi(0.0, 1.0, 0.0, 1.0)], 4)
        assert np.array_equal(hm.grid, np.ones((4, 4)))

    def test_quadrant_box_cell_center_rule(self):
        hm = aggregate_heatmap([record_with_roi(0.0, 0.5, 0.0, 0.5)], 2)
        assert np.array_equal(hm.grid, [[1.0, 0.0], [0.0, 0.0]])
        assert np.array_equal(hm.counts, [[1, 0], [0, 0]])

    def test_duplicate_records_normalize_away(self):
        one = aggregate_heatmap([record_with_roi(0.2, 0.8, 0.2, 0.8)], 8)
        two = aggregate_heatmap([record_with_roi(0.2, 0.8, 0.2, 0.8)] * 2, 8)
        assert np.array_equal(one.grid, two.grid)
        assert np.array_equal(two.counts, 2 * one.counts)

    def test_permutation_invariance(self):
        records = [
            record_with_roi(0.0, 0.5, 0.0, 0.5),
            record_with_roi(0.5, 1.0, 0.5, 1.0),
            record_with_roi(0.25, 0.75, 0.25, 0.75),
        ]
        a = aggregate_heatmap(records, 16)
        b = aggregate_heatmap(list(reversed(records)), 16)
        assert np.array_equal(a.counts, b.counts)

    def test_adding_records_never_decreases_counts(self):
        base = [record_with_roi(0.0, 0.5, 0.0, 0.5)]
        more = base + [record_with_roi(0.25, 0.75, 0.25, 0.75)]
        a = aggregate_heatmap(base, 8)
        b = aggregate_heatmap(more, 8)
        assert np.all(b.counts >= a.counts)

    def test_empty_records_rejected(self):
        with pytest.raises(ValueError):
            aggregate_heatmap([], 4)

    def test_grid_size_validated(self):
        with pytest.raises(ValueError):
            aggregate_heatmap([record_with_roi(0.0, 1.0, 0.0, 1.0)], 0)


class TestAreaStats:
    def test_quarter_boxes_mean_exact(self):
        records = [record_with_roi(0.25, 0.75, 0.25, 0.75)] * 5
        got = area_stats(records)
        assert got["mean"] == 0.25
        assert got["stddev"] == 0.0
        assert got["median"] == 0.25

    def test_two_area_mix(self):
        records = [record_with_roi(0.0, 0.5, 0.0, 0.2), record_with_roi(0.0, 0.5, 0.0, 0.6)]
        got = area_stats(records)
        assert got["mean"] == pytest.approx(0.2)
        assert got["median"] == pytest.approx(0.2)

    def test_full_image_boxes(self):
        got = area_stats([record_with_roi(0.0, 1.0, 0.0, 1.0)] * 3)
        assert got["mean"] == 1.0

    def test_areas_in_unit_interval(self):
        rng = np.random.default_rng(3)
        records = []
        for _ in range(20):
            w = np.sort(rng.integers(0, 1001, size=2))
            h = np.sort(rng.integers(0, 1001, size=2))
            if w[0] == w[1] or h[0] == h[1]:
                continue
            records.append(
                record_with_roi(w[0] / 1000, w[1] / 1000, h[0] / 1000, h[1] / 1000)
            )
        stats = area_stats(records)
        assert 0.0 < stats["mean"] <= 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            area_stats([])


class TestOutputs:
    def test_pgm_encoding(self, tmp_path):
        hm = aggregate_heatmap(
            [record_with_roi(0.0, 0.5, 0.0, 0.5), record_with_roi(0.0, 1.0, 0.0, 1.0)], 2
        )
        path = tmp_path / "h.pgm"
        heatmap_to_pgm(hm, path)
        data = path.read_bytes()
        assert data.startswith(b"P5\n2 2\n255\n")
        # counts [[2,1],[1,1]] -> normalized [1, .5, .5, .5] -> [255, 128, 128, 128]
        assert list(data[-4:]) == [255, 128, 128, 128]

    def test_csv_raw_counts(self, tmp_path):
        hm = aggregate_heatmap([record_with_roi(0.0, 0.5, 0.0, 0.5)], 2)
        path = tmp_path / "h.csv"
        heatmap_to_csv(hm, path)
        assert path.read_text() == "1,0\n0,0\n"
