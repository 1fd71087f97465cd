import numpy as np
import pytest

from synthforge.detection_metrics import (THRESHOLDS, average_precision,
                                          evaluate, iou, iou_matrix,
                                          match_greedy)

from reference_eval import ref_average_precision, ref_evaluate, ref_iou


class Gt:
    def __init__(self, image_ids, annotations, category_ids):
        self.images = [type("I", (), {"id": i})() for i in image_ids]
        self.annotations = [
            type("A", (), {"image_id": im, "category_id": c, "bbox": b})()
            for im, c, b in annotations]
        self.categories = [type("C", (), {"id": c})() for c in category_ids]


class Det:
    def __init__(self, image_id, category_id, bbox, score):
        self.image_id = image_id
        self.category_id = category_id
        self.bbox = bbox
        self.score = score


class TestIoU:
    def test_identical(self):
        assert iou((2, 3, 10, 12), (2, 3, 10, 12)) == 1.0

    def test_disjoint(self):
        assert iou((0, 0, 10, 10), (20, 20, 5, 5)) == 0.0

    def test_half_overlap_third(self):
        assert iou((0, 0, 10, 10), (5, 0, 10, 10)) == pytest.approx(1.0 / 3.0)

    def test_symmetry_and_translation_invariance(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            a = tuple(rng.uniform(0, 50, 2)) + tuple(rng.uniform(1, 30, 2))
            b = tuple(rng.uniform(0, 50, 2)) + tuple(rng.uniform(1, 30, 2))
            assert iou(a, b) == pytest.approx(iou(b, a), abs=1e-12)
            assert iou(a, b) == pytest.approx(ref_iou(a, b), abs=1e-12)
            dx, dy = rng.uniform(-20, 20, 2)
            shifted = (iou((a[0] + dx, a[1] + dy, a[2], a[3]),
                           (b[0] + dx, b[1] + dy, b[2], b[3])))
            assert shifted == pytest.approx(iou(a, b), abs=1e-9)

    def test_matrix_matches_scalar(self):
        rng = np.random.default_rng(4)
        dets = rng.uniform(1, 30, (4, 4))
        gts = rng.uniform(1, 30, (3, 4))
        mat = iou_matrix(dets, gts)
        for i in range(4):
            for j in range(3):
                assert mat[i, j] == pytest.approx(
                    iou(tuple(dets[i]), tuple(gts[j])), abs=1e-12)


class TestMatchGreedy:
    def test_exact_hit_is_tp(self):
        labels = match_greedy([(0, 0, 10, 10)], [(0, 0, 10, 10)], 0.5)
        assert labels.tolist() == [True]

    def test_duplicate_on_one_gt(self):
        # input order is score order here: first one wins
        labels = match_greedy([(0, 0, 10, 10), (1, 0, 10, 10)],
                              [(0, 0, 10, 10)], 0.5)
        assert labels.tolist() == [True, False]

    def test_equal_iou_goes_to_lowest_gt_index(self):
        gts = [(0, 0, 10, 10), (10, 0, 10, 10)]
        det = [(5, 0, 10, 10)]  # IoU 1/3 with both
        labels = match_greedy(det, gts, 0.3)
        assert labels.tolist() == [True]
        second = match_greedy([(5, 0, 10, 10), (5, 0, 10, 10)], gts, 0.3)
        assert second.tolist() == [True, True]  # second takes gt index 1

    def test_below_threshold_is_fp(self):
        labels = match_greedy([(5, 0, 10, 10)], [(0, 0, 10, 10)], 0.5)
        assert labels.tolist() == [False]


class TestAveragePrecision:
    def test_perfect(self):
        assert average_precision([True, True, True], 3) == 1.0

    def test_no_detections(self):
        assert average_precision([], 5) == 0.0

    def test_no_gt_defined_zero(self):
        assert average_precision([False, False], 0) == 0.0
        assert average_precision([], 0) == 0.0

    def test_tp_fp_tp_case(self):
        labels = [True, False, True]
        expected = ref_average_precision(labels, 2)
        got = average_precision(labels, 2)
        assert got == pytest.approx(expected, abs=1e-12)
        # closed form: 51 points at precision 1, 50 at 2/3
        assert got == pytest.approx((51 * 1.0 + 50 * (2.0 / 3.0)) / 101)

    def test_random_against_reference(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            n = int(rng.integers(0, 12))
            labels = [bool(rng.integers(0, 2)) for _ in range(n)]
            n_gt = int(rng.integers(0, 8))
            if sum(labels) > n_gt:
                n_gt = sum(labels)
            assert average_precision(labels, n_gt) == pytest.approx(
                ref_average_precision(labels, n_gt), abs=1e-12)


def random_case(rng):
    n_img = int(rng.integers(1, 21))
    cats = [1, 2, 3]
    image_ids = list(range(1, n_img + 1))
    annotations = []
    det_records = []
    for im in image_ids:
        for _ in range(int(rng.integers(0, 6))):
            box = (float(rng.uniform(0, 80)), float(rng.uniform(0, 80)),
                   float(rng.uniform(4, 40)), float(rng.uniform(4, 40)))
            annotations.append((im, int(rng.choice(cats)), box))
        for _ in range(int(rng.integers(0, 6))):
            if annotations and rng.uniform() < 0.6:
                _, _, src = annotations[int(rng.integers(0, len(annotations)))]
                box = (src[0] + float(rng.normal(0, 4)),
                       src[1] + float(rng.normal(0, 4)),
                       max(2.0, src[2] * float(rng.uniform(0.7, 1.3))),
                       max(2.0, src[3] * float(rng.uniform(0.7, 1.3))))
            else:
                box = (float(rng.uniform(0, 80)), float(rng.uniform(0, 80)),
                       float(rng.uniform(4, 40)), float(rng.uniform(4, 40)))
            score = float(np.round(rng.uniform(), 2))  # coarse -> score ties
            det_records.append((im, int(rng.choice(cats)), box, score))
    return image_ids, annotations, det_records, cats


class TestEvaluate:
    def test_perfect_detections(self):
        gt = Gt([1, 2], [(1, 1, (0, 0, 10, 10)), (2, 2, (5, 5, 8, 8))], [1, 2])
        dets = [Det(1, 1, (0, 0, 10, 10), 1.0), Det(2, 2, (5, 5, 8, 8), 1.0)]
        report = evaluate(gt, dets)
        assert report.map == 1.0
        assert report.ap75 == 1.0
        assert all(v == 1.0 for v in report.per_threshold.values())

    def test_disjoint_detections(self):
        gt = Gt([1], [(1, 1, (0, 0, 10, 10))], [1])
        dets = [Det(1, 1, (50, 50, 10, 10), 0.9)]
        report = evaluate(gt, dets)
        assert report.map == 0.0
        assert report.tp[0.5] == 0
        assert report.fp[0.5] == 1

    def test_empty_detections(self):
        gt = Gt([1], [(1, 1, (0, 0, 10, 10))], [1])
        report = evaluate(gt, [])
        assert report.map == 0.0
        assert report.n_det == 0

    def test_unknown_image_rejected(self):
        gt = Gt([1], [(1, 1, (0, 0, 10, 10))], [1])
        with pytest.raises(ValueError, match="unknown image id"):
            evaluate(gt, [Det(9, 1, (0, 0, 10, 10), 0.5)])

    def test_threshold_monotonicity(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            image_ids, anns, det_records, cats = random_case(rng)
            gt = Gt(image_ids, anns, cats)
            report = evaluate(gt, [Det(*d) for d in det_records])
            aps = [report.per_threshold[t] for t in THRESHOLDS]
            assert all(a >= b - 1e-12 for a, b in zip(aps, aps[1:]))

    def test_score_scaling_invariance(self):
        rng = np.random.default_rng(14)
        image_ids, anns, det_records, cats = random_case(rng)
        gt = Gt(image_ids, anns, cats)
        base = evaluate(gt, [Det(*d) for d in det_records])
        scaled = evaluate(gt, [Det(im, c, b, s * 0.5)
                               for im, c, b, s in det_records])
        assert scaled.per_threshold == base.per_threshold
        assert scaled.map == base.map

    def test_duplicate_penalty(self):
        gt = Gt([1], [(1, 1, (0, 0, 10, 10)), (1, 1, (30, 0, 10, 10))], [1])
        dets = [Det(1, 1, (0, 0, 10, 10), 0.9),
                Det(1, 1, (30, 0, 10, 10), 0.8)]
        base = evaluate(gt, dets)
        dup = evaluate(gt, dets + [Det(1, 1, (0.5, 0, 10, 10), 0.7)])
        for t in THRESHOLDS:
            assert dup.per_threshold[t] <= base.per_threshold[t] + 1e-12

    def test_oracle_equivalence_small_cases(self):
        from synthforge.rng import substream
        worst = 0.0
        for k in range(30):
            rng = substream(555, k, "metric.case")
            image_ids, anns, det_records, cats = random_case(rng)
            ref = ref_evaluate(
                image_ids,
                [{"image_id": im, "category_id": c, "bbox": b}
                 for im, c, b in anns],
                [{"image_id": im, "category_id": c, "bbox": b, "score": s}
                 for im, c, b, s in det_records],
                cats)
            mine = evaluate(Gt(image_ids, anns, cats),
                            [Det(*d) for d in det_records])
            for thr, ap in ref["per_threshold"].items():
                worst = max(worst, abs(mine.per_threshold[thr] - ap))
            worst = max(worst, abs(mine.map - ref["map"]))
            assert mine.tp == ref["tp"]
            assert mine.fp == ref["fp"]
        assert worst < 1e-9

    def test_report_text_and_csv(self):
        gt = Gt([1], [(1, 1, (0, 0, 10, 10))], [1])
        report = evaluate(gt, [Det(1, 1, (0, 0, 10, 10), 1.0)])
        text = report.to_text()
        assert "map: 1.000000" in text
        assert "ap@0.75: 1.000000" in text
        csv = report.to_csv()
        assert csv.splitlines()[0] == "metric,value"
        assert "map,1.0" in csv
