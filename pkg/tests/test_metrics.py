import random

import pytest

from hiprompt.errors import LabelOutsideUniverse
from hiprompt.hierarchy import load_taxonomy
from hiprompt.metrics import (
    FREQUENCY_CLUSTERS,
    cluster_report,
    confusion_counts,
    frequency_clusters,
    micro_macro_f1,
    per_label_f1,
)


def brute_force_f1(predictions, gold, universe):
    """Confusion-matrix oracle: explicit per-label loops, then F1."""
    per_label = {}
    for label in universe:
        tp = sum(1 for p, g in zip(predictions, gold) if label in p and label in g)
        fp = sum(1 for p, g in zip(predictions, gold) if label in p and label not in g)
        fn = sum(1 for p, g in zip(predictions, gold) if label not in p and label in g)
        per_label[label] = (tp, fp, fn)
    tp = sum(c[0] for c in per_label.values())
    fp = sum(c[1] for c in per_label.values())
    fn = sum(c[2] for c in per_label.values())
    micro = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
    f1s = []
    for tp, fp, fn in per_label.values():
        d = 2 * tp + fp + fn
        f1s.append(2 * tp / d if d else 0.0)
    return micro, sum(f1s) / len(f1s)


class TestMicroMacro:
    def test_perfect(self):
        preds = [{0, 1}, {2}]
        assert micro_macro_f1(preds, preds, [0, 1, 2]) == (1.0, 1.0)

    def test_hand_case(self):
        micro, macro = micro_macro_f1([{0, 1}], [{0}], [0, 1])
        assert micro == pytest.approx(2 / 3)
        assert macro == pytest.approx(0.5)

    def test_empty_predictions(self):
        micro, macro = micro_macro_f1([set(), set()], [{0}, {1}], [0, 1])
        assert micro == 0.0
        assert macro == 0.0

    def test_outside_universe(self):
        with pytest.raises(LabelOutsideUniverse):
            micro_macro_f1([{5}], [{0}], [0, 1])

    def test_matches_brute_force_on_random_pairs(self):
        rng = random.Random(0)
        universe = list(range(8))
        for _ in range(100):
            n = rng.randrange(1, 10)
            preds = [
                {l for l in universe if rng.random() < 0.3} for _ in range(n)
            ]
            gold = [{l for l in universe if rng.random() < 0.3} for _ in range(n)]
            got = micro_macro_f1(preds, gold, universe)
            expected = brute_force_f1(preds, gold, universe)
            assert got[0] == pytest.approx(expected[0], abs=0)
            assert got[1] == pytest.approx(expected[1], abs=0)

    def test_micro_within_per_label_bounds(self):
        rng = random.Random(4)
        universe = list(range(6))
        for _ in range(50):
            n = rng.randrange(2, 8)
            preds = [{l for l in universe if rng.random() < 0.4} for _ in range(n)]
            gold = [{l for l in universe if rng.random() < 0.4} for _ in range(n)]
            micro, _ = micro_macro_f1(preds, gold, universe)
            f1s = per_label_f1(confusion_counts(preds, gold, universe)).values()
            assert min(f1s) - 1e-12 <= micro <= max(f1s) + 1e-12

    def test_zero_support_policy(self):
        # label 1 never appears in gold or predictions
        micro_all, macro_all = micro_macro_f1([{0}], [{0}], [0, 1])
        micro_ex, macro_ex = micro_macro_f1(
            [{0}], [{0}], [0, 1], include_zero_support=False
        )
        assert micro_all == micro_ex == 1.0
        assert macro_all == 0.5
        assert macro_ex == 1.0


class TestClusters:
    def test_depth_mode_two_layers(self, seven_node_hier):
        f1 = {i: 0.5 for i in range(seven_node_hier.num_labels)}
        report = cluster_report(f1, seven_node_hier, {}, "depth")
        assert list(report) == ["depth_1", "depth_2"]

    def test_depth_mode_eight_layers(self):
        # chain taxonomy of depth 8, like the deepest benchmark hierarchy
        records = [("Root", "n1")] + [(f"n{i}", f"n{i+1}") for i in range(1, 8)]
        hier = load_taxonomy(records)
        report = cluster_report({i: 1.0 for i in range(8)}, hier, {}, "depth")
        assert len(report) == 8

    def test_frequency_quintiles_of_ten(self):
        counts = {i: 100 - i for i in range(10)}
        clusters = frequency_clusters(list(range(10)), counts)
        assert list(clusters) == list(FREQUENCY_CLUSTERS)
        assert all(len(m) == 2 for m in clusters.values())
        assert clusters[">80%"] == [0, 1]
        assert clusters["<20%"] == [8, 9]

    def test_frequency_ties_broken_by_id(self):
        counts = {i: 7 for i in range(10)}
        clusters = frequency_clusters(list(range(10)), counts)
        assert clusters[">80%"] == [0, 1]

    def test_frequency_cluster_means(self, seven_node_hier):
        f1 = {i: float(i) / 10 for i in range(6)}
        counts = {i: 6 - i for i in range(6)}
        report = cluster_report(f1, seven_node_hier, counts, "frequency")
        # 6 labels ranked by count desc: ids 0..5; quintiles 2/1/1/1/1
        assert report[">80%"] == pytest.approx((0.0 + 0.1) / 2)
        assert report["<20%"] == pytest.approx(0.5)

    def test_unknown_mode(self, seven_node_hier):
        with pytest.raises(ValueError):
            cluster_report({}, seven_node_hier, {}, "size")
