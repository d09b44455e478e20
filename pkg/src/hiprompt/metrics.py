"""Multi-label evaluation: micro/macro F1 from integer confusion counts,
plus the depth- and frequency-cluster breakdowns.
"""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import LabelOutsideUniverse
from .hierarchy import LabelHierarchy

FREQUENCY_CLUSTERS = (">80%", "60-80%", "40-60%", "20-40%", "<20%")


def confusion_counts(
    predictions: Sequence[Iterable[int]],
    gold: Sequence[Iterable[int]],
    universe: Sequence[int],
) -> dict[int, tuple[int, int, int]]:
    """Per-label (tp, fp, fn) over aligned prediction/gold sets."""
    assert len(predictions) == len(gold), "predictions and gold must align"
    allowed = set(universe)
    counts = {label: [0, 0, 0] for label in universe}
    for pred, g in zip(predictions, gold):
        pred, g = set(pred), set(g)
        outside = (pred | g) - allowed
        if outside:
            raise LabelOutsideUniverse(f"labels outside universe: {sorted(outside)[:5]}")
        for label in pred & g:
            counts[label][0] += 1
        for label in pred - g:
            counts[label][1] += 1
        for label in g - pred:
            counts[label][2] += 1
    return {label: tuple(c) for label, c in counts.items()}


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def per_label_f1(counts: Mapping[int, tuple[int, int, int]]) -> dict[int, float]:
    return {label: f1_from_counts(*c) for label, c in counts.items()}


def micro_macro_f1(
    predictions: Sequence[Iterable[int]],
    gold: Sequence[Iterable[int]],
    universe: Sequence[int],
    include_zero_support: bool = True,
) -> tuple[float, float]:
    """Micro-F1 from global counts; macro-F1 as unweighted per-label mean.

    Zero-support labels score 0 when predicted; with
    ``include_zero_support`` (the default) every label in the universe
    enters the macro mean, otherwise labels with no gold occurrences and
    no predictions are dropped from it.
    """
    counts = confusion_counts(predictions, gold, universe)
    tp = sum(c[0] for c in counts.values())
    fp = sum(c[1] for c in counts.values())
    fn = sum(c[2] for c in counts.values())
    micro = f1_from_counts(tp, fp, fn)
    f1s = per_label_f1(counts)
    if not include_zero_support:
        f1s = {
            label: f for label, f in f1s.items() if sum(counts[label]) > 0
        }
    macro = sum(f1s.values()) / len(f1s) if f1s else 0.0
    return micro, macro


def depth_clusters(hier: LabelHierarchy) -> dict[str, list[int]]:
    return {
        f"depth_{m}": hier.layer_ids(m) for m in range(1, hier.depth + 1)
    }


def frequency_clusters(
    universe: Sequence[int], train_counts: Mapping[int, int]
) -> dict[str, list[int]]:
    """Quintiles of labels ranked by training-sample count (ties by id)."""
    ranked = sorted(universe, key=lambda lid: (-train_counts.get(lid, 0), lid))
    chunks = np.array_split(np.asarray(ranked), len(FREQUENCY_CLUSTERS))
    return {
        name: [int(x) for x in chunk]
        for name, chunk in zip(FREQUENCY_CLUSTERS, chunks)
    }


def cluster_report(
    label_f1: Mapping[int, float],
    hier: LabelHierarchy,
    train_counts: Mapping[int, int],
    mode: str,
) -> dict[str, float]:
    """Macro-F1 per cluster, grouped by depth or by training frequency."""
    if mode == "depth":
        clusters = depth_clusters(hier)
    elif mode == "frequency":
        clusters = frequency_clusters(sorted(label_f1), train_counts)
    else:
        raise ValueError(f"unknown cluster mode: {mode!r}")
    return {
        name: (sum(label_f1[lid] for lid in members) / len(members) if members else 0.0)
        for name, members in clusters.items()
    }
