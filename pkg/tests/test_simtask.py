"""Synthetic tasks, simulation, proxy fitness and AP@50."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autoloss import boxes, simtask, zoo
from autoloss.expr import parse
from autoloss.simtask import DegenerateBox, ap_at_50, proxy_fitness, simulate

CE = zoo.get("CE").expr
ONE_CLS = parse("1", "cls")


@pytest.fixture(scope="module")
def cls_data():
    return simtask.cls_dataset(0)


@pytest.fixture(scope="module")
def reg_data():
    return simtask.reg_dataset(0)


class TestDatasets:
    def test_class_balance(self, cls_data):
        for split in (cls_data.verify, cls_data.train, cls_data.val):
            counts = split.labels.sum(axis=0)
            assert np.all(counts == counts[0])

    def test_center_separation(self, cls_data):
        c = cls_data.centers
        d = np.linalg.norm(c[:, None] - c[None], axis=-1)[np.triu_indices(len(c), 1)]
        assert d.min() >= 2 * cls_data.sigma

    def test_deterministic(self):
        a = simtask.SynthClsDataset.generate(3)
        b = simtask.SynthClsDataset.generate(3)
        assert np.array_equal(a.train.features, b.train.features)

    def test_boxes_valid(self, reg_data):
        for split in (reg_data.verify, reg_data.train, reg_data.val):
            boxes.check_boxes(split.labels)
            boxes.check_boxes(split.extra)
            ov = boxes.iou(split.extra, split.labels)
            assert ov.min() >= 0.1 and ov.max() <= 0.9

    def test_split_sizes(self, cls_data, reg_data):
        assert len(cls_data.verify) == simtask.VERIFY_N
        assert len(reg_data.train) == simtask.TRAIN_N
        assert len(reg_data.val) == simtask.VAL_N

    def test_parameter_count(self, cls_data, reg_data):
        assert (cls_data.dim + 1) * cls_data.n_classes < 1000
        assert (reg_data.dim + 1) * 4 < 1000

    def test_export_csv(self, cls_data, tmp_path):
        path = tmp_path / "verify.csv"
        simtask.export_csv(cls_data.verify, str(path), "cls")
        lines = path.read_text().splitlines()
        assert len(lines) == 1 + len(cls_data.verify)
        assert lines[0].endswith("label,iou")


class TestSimulate:
    def test_ce_learns(self):
        assert simulate(CE).metric >= 0.9

    def test_constant_is_chance(self, cls_data):
        res = simulate(ONE_CLS)
        assert res.metric == pytest.approx(1 / cls_data.n_classes)
        assert not res.diverged

    def test_giou_beats_untrained(self):
        trained = simulate(zoo.get("GIoU").expr).metric
        assert trained > simtask.untrained_metric("reg")

    def test_divergence_detected(self):
        res = simulate(parse("Exp(Mul(X,X))", "cls"))
        assert res.diverged and res.metric == 0.0
        assert res.steps_run < simtask.SIM_STEPS

    def test_shape_mismatch_counts_as_divergence(self):
        res = simulate(parse("Dot(W,X)", "cls"))
        assert res.diverged and res.metric == 0.0

    def test_deterministic(self):
        e = zoo.get("CSE-Autoloss-A-reg").expr
        assert simulate(e, seed=4).to_record() == simulate(e, seed=4).to_record()

    def test_regression_reports_ap(self):
        res = simulate(zoo.get("IoU").expr)
        assert 0.0 <= res.extras["ap50"] <= 1.0


class TestProxy:
    def test_ce_beats_constant(self):
        assert proxy_fitness(CE) > proxy_fitness(ONE_CLS)

    def test_bit_identical(self):
        e = zoo.get("FL").expr
        assert proxy_fitness(e, seed=1, steps=300) == proxy_fitness(e, seed=1, steps=300)

    def test_candidate_stream_depends_on_key(self):
        a = simtask.candidate_rng(0, CE).random()
        b = simtask.candidate_rng(0, zoo.get("BCE").expr).random()
        assert a != b

    def test_giou_within_band_of_iou(self):
        giou = proxy_fitness(zoo.get("GIoU").expr)
        iou = proxy_fitness(zoo.get("IoU").expr)
        assert giou >= iou - 0.02


def unit(x: float, y: float = 0.0) -> list[float]:
    return [x, y, x + 1.0, y + 1.0]


class TestAP:
    def test_perfect(self):
        t = np.array([unit(0), unit(5), unit(10)])
        assert ap_at_50(t, [0.1, 0.9, 0.5], t) == 1.0

    def test_no_matches(self):
        t = np.array([unit(0), unit(5)])
        p = np.array([unit(20), unit(30)])
        assert ap_at_50(p, [1.0, 0.5], t) == 0.0

    def test_one_true_match_ranked_first(self):
        t = np.array([unit(0), unit(5)])
        p = np.array([unit(0), unit(20), unit(30)])
        assert ap_at_50(p, [0.9, 0.5, 0.1], t) == pytest.approx(0.5)

    def test_groups_restrict_matching(self):
        t = np.array([unit(0)])
        assert ap_at_50(t, [1.0], t, pred_groups=[1], target_groups=[0]) == 0.0

    def test_degenerate_box(self):
        with pytest.raises(DegenerateBox):
            ap_at_50(np.array([[0, 0, 0, 1.0]]), [1.0], np.array([unit(0)]))

    @settings(max_examples=100)
    @given(st.lists(st.tuples(st.integers(0, 6), st.floats(0, 1)), min_size=1, max_size=8))
    def test_range_and_false_positive_removal(self, preds):
        targets = np.array([unit(3 * k) for k in range(4)])
        p = np.array([unit(3 * k if k < 4 else 100 + k) for k, _ in preds])
        scores = np.array([s for _, s in preds])
        ap = ap_at_50(p, scores, targets)
        assert 0.0 <= ap <= 1.0
        # drop one prediction that can never match
        fp = [j for j, (k, _) in enumerate(preds) if k >= 4]
        if fp:
            keep = np.ones(len(preds), bool)
            keep[fp[0]] = False
            assert ap_at_50(p[keep], scores[keep], targets) >= ap - 1e-12
