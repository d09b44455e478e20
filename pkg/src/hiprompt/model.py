"""End-to-end models: the layered hierarchy-aware prompt model and the
hard-prompt / soft-prompt / vanilla fine-tuning baselines.

Every variant exposes the same surface: ``score_batch`` maps a batch of
token id lists to one score per label (scattered into a full
(batch, num_labels) matrix so decoding and metrics are uniform), plus an
MLM co-objective term when enabled.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional, Sequence

import torch
from torch import Tensor, nn

from .encoder import EncoderConfig, TinyEncoder, Vocabulary, tokenize
from .errors import MissingVerbalizerMap, NonFiniteScore
from .graph import StructureEncoder, inject_templates
from .hierarchy import AugmentedGraph, LabelHierarchy, build_augmented_graph
from .losses import mlm_cross_entropy, mlm_masking
from .prompt import (
    SOFT_PROMPT_LENGTH,
    assemble_baseline_input,
    assemble_hpt_input,
    init_verbalizers,
    max_text_length,
)

VARIANTS = ("hpt", "hard", "soft", "finetune")
LOSS_KINDS = ("zmlce", "bce")


@dataclass
class ModelConfig:
    variant: str = "hpt"
    scheme: str = "same-depth"
    graph_seed: Optional[int] = None
    use_injection: bool = True
    flat_template: bool = False
    loss_kind: str = "zmlce"
    use_mlm: bool = True
    mask_rate: float = 0.15
    bert_style_masking: bool = True
    gat_layers: int = 1

    def __post_init__(self):
        assert self.variant in VARIANTS, f"unknown variant {self.variant!r}"
        assert self.loss_kind in LOSS_KINDS, f"unknown loss {self.loss_kind!r}"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def zmlce_batched(scores: Tensor, pos_mask: Tensor) -> Tensor:
    """Row-wise zero-bounded multi-label cross entropy.

    Args:
        scores: (B, n) finite scores.
        pos_mask: (B, n) bool, True at target labels.
    Returns:
        (B,) per-row losses.
    """
    if scores.numel() and not torch.isfinite(scores).all():
        raise NonFiniteScore("scores contain NaN or inf")
    zero = scores.new_zeros(scores.shape[0], 1)
    neg = scores.masked_fill(pos_mask, float("-inf"))
    pos = (-scores).masked_fill(~pos_mask, float("-inf"))
    neg_term = torch.logsumexp(torch.cat([zero, neg], dim=1), dim=1)
    pos_term = torch.logsumexp(torch.cat([zero, pos], dim=1), dim=1)
    return neg_term + pos_term


def _flat_graph(hier: LabelHierarchy) -> AugmentedGraph:
    # Single virtual node adjacent to every label: the injection path for
    # the flat-template ablation.
    return AugmentedGraph(
        num_labels=hier.num_labels,
        num_layers=1,
        label_edges=tuple(hier.edges()),
        virtual_edges=tuple((hier.num_labels, lid) for lid in range(hier.num_labels)),
        scheme="same-depth",
    )


class HtcModel(nn.Module):
    """One trainable model per run; the variant decides the prompt shape.

    All parameters (encoder, templates, prediction-slot embedding,
    verbalizers, structure encoder) train end to end.
    """

    def __init__(
        self,
        hier: LabelHierarchy,
        vocab: Vocabulary,
        enc_cfg: EncoderConfig,
        cfg: ModelConfig = ModelConfig(),
        verbalizer_map: Optional[dict[str, str]] = None,
    ):
        super().__init__()
        self.hier = hier
        self.vocab = vocab
        self.cfg = cfg
        self.encoder = TinyEncoder(enc_cfg)
        Y, d = hier.num_labels, enc_cfg.dim

        if cfg.variant == "hpt":
            self.num_slots = 1 if cfg.flat_template else hier.depth
            self.templates = nn.Parameter(torch.randn(self.num_slots, d) * 0.02)
            with torch.no_grad():
                pred_init = self.encoder.mask_embedding().clone()
            self.pred_emb = nn.Parameter(pred_init)
            self.verbs = init_verbalizers(hier, self.encoder, vocab)
            graph = (
                _flat_graph(hier)
                if cfg.flat_template
                else build_augmented_graph(hier, cfg.scheme, cfg.graph_seed)
            )
            self.structure = StructureEncoder(graph, d, cfg.gat_layers)
            self.text_budget = max_text_length(enc_cfg.max_len, self.num_slots)
        elif cfg.variant == "soft":
            self.soft_templates = nn.Parameter(torch.randn(SOFT_PROMPT_LENGTH, d) * 0.02)
            self.verbs = init_verbalizers(hier, self.encoder, vocab)
            self.text_budget = enc_cfg.max_len - (SOFT_PROMPT_LENGTH + 4)
        elif cfg.variant == "hard":
            if verbalizer_map is None:
                raise MissingVerbalizerMap(
                    "hard prompt requires a label->word verbalizer map"
                )
            missing = [n.name for n in hier.nodes if n.name not in verbalizer_map]
            if missing:
                raise MissingVerbalizerMap(f"no verbalizer word for {missing[:5]}")
            word_ids = [vocab.lookup(verbalizer_map[n.name]) for n in hier.nodes]
            self.register_buffer(
                "verbalizer_word_ids", torch.as_tensor(word_ids, dtype=torch.long)
            )
            self.text_budget = enc_cfg.max_len - 9  # 4 template words + 5 specials
        else:  # finetune
            self.cls_head = nn.Linear(d, Y)
            self.text_budget = enc_cfg.max_len - 2

        if cfg.variant == "hpt" and not cfg.flat_template:
            layer_ids = [hier.layer_ids(m) for m in range(1, hier.depth + 1)]
        else:
            layer_ids = [list(range(Y))]
        self._layer_ids = layer_ids

    # --- assembly ---

    def injected_templates(self) -> Tensor:
        """Hierarchy-injected template embeddings (num_slots, d)."""
        if not self.cfg.use_injection:
            return self.templates
        feats = torch.cat([self.verbs.embeddings, self.templates], dim=0)
        propagated = self.structure.propagate(feats)
        return inject_templates(self.templates, propagated, self.hier.num_labels)

    def tokenize(self, text: str) -> list[int]:
        return tokenize(text, self.vocab, max_len=self.text_budget)

    def _assemble_batch(
        self, id_lists: Sequence[Sequence[int]]
    ) -> tuple[Tensor, Tensor, list]:
        """Embed, assemble and pad a batch; returns (seq, pad_mask, layouts)."""
        cfg = self.cfg
        if cfg.variant == "hpt":
            injected = self.injected_templates()
            pairs = [
                assemble_hpt_input(ids, injected, self.pred_emb, self.encoder)
                for ids in id_lists
            ]
        else:
            soft = self.soft_templates if cfg.variant == "soft" else None
            pairs = [
                assemble_baseline_input(
                    ids, cfg.variant, self.encoder, soft_templates=soft, vocab=self.vocab
                )
                for ids in id_lists
            ]
        seqs, layouts = zip(*pairs)
        B = len(seqs)
        M = max(s.shape[0] for s in seqs)
        d = self.encoder.dim
        batch = seqs[0].new_zeros((B, M, d))
        pad_mask = torch.ones((B, M), dtype=torch.bool)
        for b, s in enumerate(seqs):
            batch[b, : s.shape[0]] = s
            pad_mask[b, : s.shape[0]] = False
        return batch, pad_mask, list(layouts)

    # --- scoring ---

    def score_batch(
        self,
        id_lists: Sequence[Sequence[int]],
        mlm_rng: Optional[random.Random] = None,
    ) -> tuple[Tensor, Tensor]:
        """Full per-label scores for a batch of token id sequences.

        With ``mlm_rng`` the text is corrupted and the MLM co-objective is
        computed against the original ids; otherwise the MLM term is 0.

        Returns:
            scores: (B, num_labels), each label's score from its own slot.
            mlm_term: scalar MLM loss (0 when masking is off).
        """
        cfg = self.cfg
        plans = None
        original = [list(ids) for ids in id_lists]
        inputs = original
        if mlm_rng is not None and cfg.use_mlm and cfg.variant == "hpt":
            plans, inputs = [], []
            for ids in original:
                plan, corrupted = mlm_masking(
                    ids,
                    vocab_size=len(self.vocab),
                    rate=cfg.mask_rate,
                    rng=mlm_rng,
                    bert_style=cfg.bert_style_masking,
                )
                plans.append(plan)
                inputs.append(corrupted)

        batch, pad_mask, layouts = self._assemble_batch(inputs)
        hidden = self.encoder.encode(batch, pad_mask=pad_mask)
        B = hidden.shape[0]
        Y = self.hier.num_labels
        scores = hidden.new_zeros((B, Y))

        if cfg.variant == "hpt":
            pred_idx = torch.as_tensor(
                [layout.pred_positions for layout in layouts], dtype=torch.long
            )
            slot_hidden = hidden[torch.arange(B).unsqueeze(1), pred_idx]  # (B, L, d)
            for m, ids in enumerate(self._layer_ids, start=1):
                idx = torch.as_tensor(ids, dtype=torch.long)
                v = self.verbs.embeddings[idx]
                b = self.verbs.biases[idx]
                slot = slot_hidden[:, m - 1 if not cfg.flat_template else 0]
                scores[:, idx] = slot @ v.t() + b
        elif cfg.variant == "soft":
            slot = hidden[torch.arange(B), [l.pred_positions[0] for l in layouts]]
            scores = slot @ self.verbs.embeddings.t() + self.verbs.biases
        elif cfg.variant == "hard":
            slot = hidden[torch.arange(B), [l.pred_positions[0] for l in layouts]]
            vocab_scores = self.encoder.project_vocab(slot)  # (B, V)
            scores = vocab_scores[:, self.verbalizer_word_ids]
        else:  # finetune
            scores = self.cls_head(hidden[:, 0])  # CLS pooling

        mlm_term = hidden.new_zeros(())
        if plans is not None:
            rows, targets = [], []
            for b, (plan, layout) in enumerate(zip(plans, layouts)):
                offset = layout.text_span[0]
                for p, orig in zip(plan.positions, plan.original_ids):
                    rows.append(hidden[b, offset + p])
                    targets.append(orig)
            if rows:
                logits = self.encoder.project_vocab(torch.stack(rows))
                mlm_term = mlm_cross_entropy(logits, targets)
        return scores, mlm_term

    def positives_matrix(self, per_example_ids: Sequence[set[int]]) -> Tensor:
        mask = torch.zeros((len(per_example_ids), self.hier.num_labels), dtype=torch.bool)
        for b, ids in enumerate(per_example_ids):
            for i in ids:
                mask[b, i] = True
        return mask

    def classification_loss(self, scores: Tensor, pos_mask: Tensor) -> Tensor:
        """Per-variant classification loss, mean over the batch."""
        cfg = self.cfg
        if cfg.variant == "hpt" and cfg.loss_kind == "zmlce":
            total = scores.new_zeros(scores.shape[0])
            for ids in self._layer_ids:
                idx = torch.as_tensor(ids, dtype=torch.long)
                total = total + zmlce_batched(scores[:, idx], pos_mask[:, idx])
            return total.mean()
        # BCE path: layers partition the labels, so the per-layer sum equals
        # one BCE over the full score matrix. Baselines are flat by design.
        return torch.nn.functional.binary_cross_entropy_with_logits(
            scores, pos_mask.to(scores.dtype), reduction="sum"
        ) / scores.shape[0]

    def training_loss(
        self,
        id_lists: Sequence[Sequence[int]],
        positives: Sequence[set[int]],
        mlm_rng: Optional[random.Random] = None,
    ) -> Tensor:
        scores, mlm_term = self.score_batch(id_lists, mlm_rng=mlm_rng)
        return self.classification_loss(scores, self.positives_matrix(positives)) + mlm_term
