"""Training objectives: the zero-bounded multi-label cross entropy, its
layer-wise total with the MLM co-objective, text masking, and the BCE/CE
reference losses used by baselines and ablations.

The zero-bounded loss anchors positives above and negatives below a
constant score of 0, which is what makes strict >0 thresholding valid at
decode time:

    L = log(1 + sum_neg e^{s_i}) + log(1 + sum_pos e^{-s_j})

Both logs are computed as logsumexp over {0} and the score set, so scores
beyond +-700 do not overflow.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import torch
from torch import Tensor

from .encoder import MASK, NUM_RESERVED
from .errors import EmptyPartition, LayerMismatch, NonFiniteScore


def _as_tensor(scores) -> Tensor:
    t = torch.as_tensor(scores, dtype=torch.get_default_dtype()) \
        if not isinstance(scores, Tensor) else scores
    if t.numel() > 0 and not torch.isfinite(t).all():
        raise NonFiniteScore("scores contain NaN or inf")
    return t


def _positive_mask(n: int, positives: Iterable[int], device) -> Tensor:
    mask = torch.zeros(n, dtype=torch.bool, device=device)
    for i in positives:
        if not 0 <= i < n:
            raise IndexError(f"positive index {i} outside [0, {n})")
        mask[i] = True
    return mask


def zmlce(scores, positives: Iterable[int]) -> Tensor:
    """Zero-bounded multi-label cross entropy over one score vector.

    ``positives`` indexes the target labels; the rest are negatives.
    Empty score vectors yield 0.
    """
    s = _as_tensor(scores)
    if s.numel() == 0:
        return torch.zeros((), dtype=s.dtype if s.dtype.is_floating_point else None)
    pos = _positive_mask(s.shape[0], positives, s.device)
    zero = s.new_zeros(1)
    neg_term = torch.logsumexp(torch.cat([zero, s[~pos]]), dim=0)
    pos_term = torch.logsumexp(torch.cat([zero, -s[pos]]), dim=0)
    return neg_term + pos_term


def layerwise_total(
    layer_scores: Sequence[tuple[Tensor, Iterable[int]]],
    mlm_term: Tensor | float = 0.0,
    expected_layers: Optional[int] = None,
) -> Tensor:
    """Sum of per-layer zero-bounded losses plus the MLM co-objective."""
    if expected_layers is not None and len(layer_scores) != expected_layers:
        raise LayerMismatch(
            f"expected {expected_layers} layers, got {len(layer_scores)}"
        )
    total = torch.as_tensor(mlm_term, dtype=torch.get_default_dtype()) \
        if not isinstance(mlm_term, Tensor) else mlm_term
    for scores, positives in layer_scores:
        total = total + zmlce(scores, positives)
    return total


def bce_loss(scores, positives: Iterable[int]) -> Tensor:
    """Multiple-binary-classification loss on pre-sigmoid logits (summed)."""
    s = _as_tensor(scores)
    if s.numel() == 0:
        return torch.zeros(())
    y = _positive_mask(s.shape[0], positives, s.device).to(s.dtype)
    return torch.nn.functional.binary_cross_entropy_with_logits(s, y, reduction="sum")


def mlce_reference(scores, positives: Iterable[int]) -> Tensor:
    """Unanchored multi-label cross entropy, log(1 + sum_n sum_p e^{s_i - s_j}).

    Test-only oracle: without the zero anchor the decoding threshold is
    undefined, so this never drives training or inference.
    """
    s = _as_tensor(scores)
    pos = _positive_mask(s.shape[0] if s.numel() else 0, positives, s.device)
    if not pos.any() or pos.all():
        raise EmptyPartition("need non-empty positives and negatives")
    diffs = (s[~pos].unsqueeze(1) - s[pos].unsqueeze(0)).reshape(-1)
    return torch.logsumexp(torch.cat([s.new_zeros(1), diffs]), dim=0)


@dataclass(frozen=True)
class MaskingPlan:
    """Record of one MLM corruption: which text positions were selected,
    their original ids, and the replacement applied at each."""

    positions: tuple[int, ...]
    original_ids: tuple[int, ...]
    replacements: tuple[str, ...]  # each "mask" | "random" | "keep"
    rate: float


def mlm_masking(
    text_ids: Sequence[int],
    vocab_size: int,
    rate: float = 0.15,
    rng: random.Random | int | None = None,
    bert_style: bool = True,
) -> tuple[MaskingPlan, list[int]]:
    """Select ceil(rate * N) text positions and corrupt them.

    With ``bert_style`` each selected position becomes MASK with
    probability 0.8, a random non-reserved token with 0.1, and is kept
    unchanged with 0.1; otherwise every selected position becomes MASK.
    Only text positions are ever touched; templates and special tokens are
    appended after corruption.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"mask rate must lie in [0, 1], got {rate}")
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)
    n = len(text_ids)
    k = math.ceil(rate * n)
    positions = sorted(rng.sample(range(n), k)) if k else []
    corrupted = list(text_ids)
    replacements = []
    for p in positions:
        if bert_style:
            u = rng.random()
            if u < 0.8:
                corrupted[p] = MASK
                replacements.append("mask")
            elif u < 0.9:
                corrupted[p] = rng.randrange(NUM_RESERVED, max(vocab_size, NUM_RESERVED + 1))
                replacements.append("random")
            else:
                replacements.append("keep")
        else:
            corrupted[p] = MASK
            replacements.append("mask")
    plan = MaskingPlan(
        positions=tuple(positions),
        original_ids=tuple(text_ids[p] for p in positions),
        replacements=tuple(replacements),
        rate=rate,
    )
    return plan, corrupted


def mlm_cross_entropy(logits: Tensor, target_ids: Sequence[int]) -> Tensor:
    """Mean softmax cross entropy of (P, V) logits against original ids."""
    if logits.shape[0] == 0:
        return logits.new_zeros(())
    targets = torch.as_tensor(list(target_ids), dtype=torch.long, device=logits.device)
    return torch.nn.functional.cross_entropy(logits, targets)
