import numpy as np
import pytest

from softseg import (
    AnnotationSet,
    BinaryMask,
    GedReport,
    SoftMask,
    confusion,
    dice,
    ged_squared_deterministic,
    ged_squared_general,
    hausdorff95,
    iou,
    precision_recall,
    threshold_sweep,
)
from softseg.metrics import DEFAULT_THRESHOLDS, summarize_rows
from _oracles import brute_hd95, loop_confusion, loop_ged_squared, random_mask


def bm(array) -> BinaryMask:
    return BinaryMask(np.asarray(array, dtype=np.uint8))


class TestConfusion:
    def test_identical_all_ones(self):
        c = confusion(bm(np.ones((2, 2))), bm(np.ones((2, 2))))
        assert (c.tp, c.fp, c.fn, c.tn) == (4, 0, 0, 0)

    def test_all_ones_vs_all_zeros(self):
        c = confusion(bm(np.ones((2, 2))), bm(np.zeros((2, 2))))
        assert (c.tp, c.fp, c.fn, c.tn) == (0, 4, 0, 0)

    def test_random_pair_against_loop(self):
        rng = np.random.default_rng(21)
        pred, gt = random_mask(rng, 8, 8), random_mask(rng, 8, 8)
        c = confusion(bm(pred), bm(gt))
        assert (c.tp, c.fp, c.fn, c.tn) == loop_confusion(pred, gt)
        assert c.total == 64

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="differ"):
            confusion(bm(np.ones((2, 2))), bm(np.ones((2, 3))))


class TestOverlapMetrics:
    def test_both_empty_convention(self):
        empty = bm(np.zeros((3, 3)))
        assert dice(empty, empty) == 1.0
        assert iou(empty, empty) == 1.0

    def test_identical_nonempty(self):
        rng = np.random.default_rng(22)
        mask = bm(random_mask(rng, 5, 5))
        assert dice(mask, mask) == 1.0

    def test_small_counts(self):
        # |A| = 2, |B| = 3, |A ∩ B| = 1
        a = bm([[1, 1, 0, 0, 0]])
        b = bm([[1, 0, 1, 1, 0]])
        assert dice(a, b) == pytest.approx(0.4)

    def test_disjoint_iou_zero(self):
        assert iou(bm([[1, 0]]), bm([[0, 1]])) == 0.0

    def test_iou_quarter_and_dice_identity(self):
        # |A ∩ B| = 1, |A ∪ B| = 4
        a = bm([[1, 1, 0, 0]])
        b = bm([[1, 0, 1, 1]])
        v = iou(a, b)
        assert v == pytest.approx(0.25)
        assert dice(a, b) == pytest.approx(2 * v / (1 + v))

    def test_dice_iou_identity_random(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            a = bm(random_mask(rng, 9, 7))
            b = bm(random_mask(rng, 9, 7))
            v = iou(a, b)
            assert dice(a, b) == pytest.approx(2 * v / (1 + v), abs=1e-12)


class TestPrecisionRecall:
    def test_perfect(self):
        mask = bm([[1, 0], [1, 1]])
        assert precision_recall(mask, mask) == (1.0, 1.0)

    def test_strict_superset(self):
        gt = bm([[1, 0], [0, 0]])
        pred = bm([[1, 1], [0, 0]])
        precision, recall = precision_recall(pred, gt)
        assert recall == 1.0 and precision < 1.0

    def test_counts(self):
        # tp=3, fp=1, fn=2
        pred = bm([[1, 1, 1, 1, 0, 0]])
        gt = bm([[1, 1, 1, 0, 1, 1]])
        assert precision_recall(pred, gt) == (0.75, 0.6)

    def test_empty_conventions(self):
        empty = bm(np.zeros((2, 2)))
        full = bm(np.ones((2, 2)))
        assert precision_recall(empty, empty) == (1.0, 1.0)
        assert precision_recall(empty, full) == (0.0, 0.0)
        assert precision_recall(full, empty) == (0.0, 1.0)


class TestHausdorff95:
    def test_identical_masks(self):
        rng = np.random.default_rng(24)
        mask = bm(random_mask(rng, 10, 10))
        assert hausdorff95(mask, mask) == 0.0

    def test_two_single_pixels_distance_five(self):
        a = np.zeros((8, 8), dtype=np.uint8)
        b = np.zeros((8, 8), dtype=np.uint8)
        a[1, 1] = 1
        b[4, 5] = 1  # offset (3, 4), distance 5
        assert hausdorff95(bm(a), bm(b)) == pytest.approx(5.0)

    def test_empty_conventions(self):
        empty = bm(np.zeros((4, 4)))
        some = bm([[0, 1], [0, 0]])
        padded = bm(np.pad(some.values, ((0, 2), (0, 2))))
        assert hausdorff95(empty, empty) == 0.0
        assert hausdorff95(empty, padded) is None
        assert hausdorff95(padded, empty) is None

    def test_matches_brute_force(self):
        rng = np.random.default_rng(25)
        checked = 0
        while checked < 300:
            h, w = rng.integers(1, 33, size=2)
            a = random_mask(rng, h, w, p=rng.uniform(0.05, 0.6))
            b = random_mask(rng, h, w, p=rng.uniform(0.05, 0.6))
            expected = brute_hd95(a, b)
            actual = hausdorff95(bm(a), bm(b))
            if expected is None:
                assert actual is None
            else:
                assert actual == pytest.approx(expected, abs=1e-9)
            checked += 1

    def test_symmetric(self):
        rng = np.random.default_rng(26)
        for _ in range(50):
            a = bm(random_mask(rng, 12, 12))
            b = bm(random_mask(rng, 12, 12))
            va, vb = hausdorff95(a, b), hausdorff95(b, a)
            assert (va is None and vb is None) or va == vb


class TestThresholdSweep:
    def test_perfect_prediction(self):
        rng = np.random.default_rng(27)
        mask = SoftMask(rng.random((10, 10)))
        result = threshold_sweep(mask, mask)
        for row in result.rows:
            assert row.dsc == row.iou == row.precision == row.recall == 1.0
            assert row.hd95 == 0.0
        for name in ("dsc", "iou", "precision", "recall", "hd95"):
            assert result.summary.std[name] == 0.0
        assert result.summary.hd95_skipped == 0

    def test_default_thresholds_step_ten_percent(self):
        assert DEFAULT_THRESHOLDS == (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
        mask = SoftMask(np.full((4, 4), 0.5))
        assert len(threshold_sweep(mask, mask).rows) == 9

    def test_constant_masks_hand_enumeration(self):
        pred = SoftMask(np.full((4, 4), 0.55))
        gt = SoftMask(np.full((4, 4), 0.45))
        result = threshold_sweep(pred, gt)
        for row in result.rows:
            if row.threshold <= 0.45:
                assert row.dsc == 1.0  # both all-ones
                assert row.hd95 == 0.0
            elif row.threshold <= 0.55:
                assert row.dsc == 0.0  # gt empty, pred full
                assert row.hd95 is None
                assert row.precision == 0.0 and row.recall == 1.0
            else:
                assert row.dsc == 1.0  # both empty
                assert row.hd95 == 0.0
        assert result.summary.hd95_skipped == 1  # only tau = 0.5 in that band

    def test_rejects_empty_or_invalid_thresholds(self):
        mask = SoftMask(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            threshold_sweep(mask, mask, thresholds=[])
        with pytest.raises(ValueError):
            threshold_sweep(mask, mask, thresholds=[0.5, 1.0])

    def test_all_hd95_undefined_reported(self):
        pred = SoftMask(np.zeros((3, 3)))
        gt = SoftMask(np.full((3, 3), 0.99))
        result = threshold_sweep(pred, gt)
        assert result.summary.hd95_skipped == 9
        assert result.summary.mean["hd95"] is None
        assert result.summary.std["hd95"] is None

    def test_summarize_rejects_empty(self):
        with pytest.raises(ValueError):
            summarize_rows([])


class TestGedGeneral:
    def test_identical_multisets_zero(self):
        rng = np.random.default_rng(28)
        samples = [bm(random_mask(rng, 6, 6)) for _ in range(4)]
        assert ged_squared_general(samples, list(samples)) == 0.0

    def test_singleton_matches_deterministic(self):
        rng = np.random.default_rng(29)
        for _ in range(50):
            n = int(rng.integers(1, 7))
            annotations = AnnotationSet([bm(random_mask(rng, 8, 8)) for _ in range(n)])
            pred = bm(random_mask(rng, 8, 8))
            general = ged_squared_general(list(annotations), [pred])
            report = ged_squared_deterministic(annotations, pred)
            assert general == pytest.approx(report.d2_ged, abs=1e-12)

    def test_tiny_instance_matches_expanded_double_sum(self):
        samples_p = [bm([[1, 0], [1, 1]]), bm([[1, 1], [0, 0]]), bm([[0, 0], [0, 1]])]
        samples_q = [bm([[1, 0], [0, 1]]), bm([[1, 1], [1, 1]])]
        expected = loop_ged_squared(
            [m.values for m in samples_p], [m.values for m in samples_q]
        )
        assert ged_squared_general(samples_p, samples_q) == pytest.approx(expected, abs=1e-12)

    def test_rejects_empty_lists(self):
        mask = bm([[1]])
        with pytest.raises(ValueError):
            ged_squared_general([], [mask])
        with pytest.raises(ValueError):
            ged_squared_general([mask], [])


class TestGedDeterministic:
    def test_prediction_equal_to_every_annotation(self):
        mask = bm([[1, 0], [1, 1]])
        annotations = AnnotationSet([mask, mask, mask])
        report = ged_squared_deterministic(annotations, mask)
        assert report.d2_ged == 0.0
        assert report.expected_dsc == 1.0

    def test_brain_growth_row(self):
        report = GedReport.from_components(expected_distance=0.1876, diversity=0.2429)
        assert report.d2_ged == pytest.approx(0.1323, abs=5e-4)

    def test_kidney_row(self):
        report = GedReport.from_components(expected_distance=0.0814, diversity=0.1015)
        assert report.d2_ged == pytest.approx(0.0613, abs=5e-4)

    def test_identity_holds_by_construction(self):
        rng = np.random.default_rng(30)
        for _ in range(25):
            annotations = AnnotationSet([bm(random_mask(rng, 7, 7)) for _ in range(4)])
            pred = bm(random_mask(rng, 7, 7))
            report = ged_squared_deterministic(annotations, pred)
            assert report.d2_ged == pytest.approx(
                2 * report.expected_distance - report.diversity, abs=1e-12
            )

    def test_shape_mismatch_rejected(self):
        annotations = AnnotationSet([bm(np.ones((2, 2)))])
        with pytest.raises(ValueError):
            ged_squared_deterministic(annotations, bm(np.ones((3, 3))))
