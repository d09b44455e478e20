"""Training loop with early stopping, thresholded decoding, evaluation,
nearest-word inspection, the low-resource protocol and checkpointing.
"""

from __future__ import annotations

import copy
import json
import math
import random
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import torch

from . import __version__
from .data import Example, write_taxonomy
from .encoder import NUM_RESERVED, EncoderConfig, Vocabulary, word_split
from .errors import (
    DivergedLoss,
    EmptyDataset,
    FractionOutOfRange,
    UnknownLabel,
)
from .hierarchy import LabelHierarchy, load_taxonomy, positives_per_layer, read_taxonomy_file
from .metrics import cluster_report, confusion_counts, micro_macro_f1, per_label_f1
from .model import HtcModel, ModelConfig
from .prompt import HARD_PROMPT_WORDS, VerbalizerTable


@dataclass
class RunConfig:
    """One training run. Optimization defaults: batch 16, Adam at 3e-5,
    early stopping after 5 non-improving epochs on dev Macro-F1."""

    batch_size: int = 16
    learning_rate: float = 3e-5
    optimizer: str = "adam"
    patience: int = 5
    max_epochs: int = 30
    seed: int = 0

    # model
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

    # built-in encoder
    dim: int = 64
    num_blocks: int = 2
    num_heads: int = 4
    ffn_dim: int = 128
    max_len: int = 128
    dropout: float = 0.1
    tied_mlm: bool = True

    # evaluation
    ancestor_closure: bool = True
    path_consistency: bool = False
    include_zero_support: bool = True

    def __post_init__(self):
        assert self.batch_size >= 1 and self.patience >= 0 and self.max_epochs >= 0

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            variant=self.variant,
            scheme=self.scheme,
            graph_seed=self.graph_seed,
            use_injection=self.use_injection,
            flat_template=self.flat_template,
            loss_kind=self.loss_kind,
            use_mlm=self.use_mlm,
            mask_rate=self.mask_rate,
            bert_style_masking=self.bert_style_masking,
            gat_layers=self.gat_layers,
        )

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        return EncoderConfig(
            vocab_size=vocab_size,
            dim=self.dim,
            num_blocks=self.num_blocks,
            num_heads=self.num_heads,
            ffn_dim=self.ffn_dim,
            max_len=self.max_len,
            dropout=self.dropout,
            tied_mlm=self.tied_mlm,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(**d)


@dataclass
class RunMetrics:
    micro_f1: float
    macro_f1: float
    per_layer: list[dict]  # [{"layer": m, "micro_f1": .., "macro_f1": ..}]
    depth_clusters: dict[str, float]
    frequency_clusters: dict[str, float]
    loss_curve: list[float]
    dev_curve: list[dict]  # per epoch: {"epoch", "micro_f1", "macro_f1"}
    best_epoch: int
    label_f1: dict[str, float] = field(default_factory=dict)
    confusion: dict[str, list[int]] = field(default_factory=dict)  # name -> [tp, fp, fn]
    train_counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def decode(
    layer_scores: Sequence[tuple[Sequence[int], Sequence[float]]],
    hier: Optional[LabelHierarchy] = None,
    path_consistency: bool = False,
) -> set[int]:
    """Predicted label ids: per layer, labels scoring strictly above 0.

    With ``path_consistency`` a label survives only if every ancestor was
    predicted too (off by default).
    """
    predicted = {
        int(lid)
        for ids, scores in layer_scores
        for lid, s in zip(ids, scores)
        if float(s) > 0.0
    }
    if path_consistency:
        assert hier is not None, "path consistency needs the hierarchy"
        predicted = {
            lid for lid in predicted if all(a in predicted for a in hier.ancestors(lid))
        }
    return predicted


def decode_score_matrix(
    scores: torch.Tensor, hier: LabelHierarchy, path_consistency: bool = False
) -> list[set[int]]:
    """Row-wise decoding of a (B, num_labels) score matrix."""
    out = []
    for row in scores:
        layered = [
            (hier.layer_ids(m), row[hier.layer_ids(m)].tolist())
            for m in range(1, hier.depth + 1)
        ]
        out.append(decode(layered, hier=hier, path_consistency=path_consistency))
    return out


def gold_ids(example: Example, hier: LabelHierarchy, closure: bool = True) -> set[int]:
    per_layer = positives_per_layer(example.labels, hier, closure=closure)
    return set().union(*per_layer) if per_layer else set()


def predict_sets(
    model: HtcModel,
    examples: Sequence[Example],
    batch_size: int = 64,
    path_consistency: bool = False,
) -> list[set[int]]:
    """Decoded prediction sets for a list of examples (eval mode)."""
    model.eval()
    preds: list[set[int]] = []
    with torch.no_grad():
        for start in range(0, len(examples), batch_size):
            chunk = examples[start : start + batch_size]
            ids = [model.tokenize(ex.text) for ex in chunk]
            scores, _ = model.score_batch(ids)
            preds.extend(
                decode_score_matrix(scores, model.hier, path_consistency)
            )
    return preds


def evaluate(
    model: HtcModel,
    examples: Sequence[Example],
    config: RunConfig,
) -> tuple[float, float, list[set[int]], list[set[int]]]:
    """(micro, macro, predictions, gold) on a split."""
    hier = model.hier
    preds = predict_sets(
        model, examples, path_consistency=config.path_consistency
    )
    golds = [gold_ids(ex, hier, closure=config.ancestor_closure) for ex in examples]
    universe = list(range(hier.num_labels))
    micro, macro = micro_macro_f1(
        preds, golds, universe, include_zero_support=config.include_zero_support
    )
    return micro, macro, preds, golds


def build_vocabulary(train_examples: Sequence[Example]) -> Vocabulary:
    # Hard-prompt template words are appended so the template never has to
    # fall back to UNK even on tiny corpora.
    tokens = [tok for ex in train_examples for tok in word_split(ex.text)]
    tokens.extend(HARD_PROMPT_WORDS)
    return Vocabulary.from_tokens(tokens)


def train(
    config: RunConfig,
    hier: LabelHierarchy,
    datasets: dict[str, Sequence[Example]],
    verbalizer_map: Optional[dict[str, str]] = None,
    vocab: Optional[Vocabulary] = None,
    quiet: bool = True,
) -> tuple[HtcModel, RunMetrics]:
    """Train end to end, keep the best dev-Macro-F1 checkpoint, and report
    metrics on the test split."""
    train_set = list(datasets.get("train", ()))
    dev_set = list(datasets.get("dev", ()))
    test_set = list(datasets.get("test", ())) or dev_set
    if not train_set:
        raise EmptyDataset("training split is empty")
    if not dev_set:
        raise EmptyDataset("development split is empty")

    torch.manual_seed(config.seed)
    shuffle_rng = random.Random(config.seed)
    mlm_rng = random.Random(config.seed + 0x5EED)

    if vocab is None:
        vocab = build_vocabulary(train_set)
    model = HtcModel(
        hier,
        vocab,
        config.encoder_config(len(vocab)),
        config.model_config(),
        verbalizer_map=verbalizer_map,
    )
    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(params, lr=config.learning_rate)

    token_ids = [model.tokenize(ex.text) for ex in train_set]
    positives = [
        gold_ids(ex, hier, closure=config.ancestor_closure) for ex in train_set
    ]

    best_state = copy.deepcopy(model.state_dict())
    best_macro = -1.0
    best_epoch = 0
    epochs_since_best = 0
    loss_curve: list[float] = []
    dev_curve: list[dict] = []

    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = list(range(len(train_set)))
        shuffle_rng.shuffle(order)
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            optimizer.zero_grad()
            loss = model.training_loss(
                [token_ids[i] for i in batch],
                [positives[i] for i in batch],
                mlm_rng=mlm_rng,
            )
            if not torch.isfinite(loss):
                raise DivergedLoss(f"non-finite loss at epoch {epoch}")
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach())
        loss_curve.append(epoch_loss / math.ceil(len(order) / config.batch_size))

        dev_micro, dev_macro, _, _ = evaluate(model, dev_set, config)
        dev_curve.append(
            {"epoch": epoch, "micro_f1": dev_micro, "macro_f1": dev_macro}
        )
        if not quiet:
            print(
                f"epoch {epoch:3d}  loss {loss_curve[-1]:.4f}  "
                f"dev micro {dev_micro:.4f}  dev macro {dev_macro:.4f}"
            )
        if dev_macro > best_macro:
            best_macro = dev_macro
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= config.patience:
                break

    model.load_state_dict(best_state)

    micro, macro, preds, golds = evaluate(model, test_set, config)
    universe = list(range(hier.num_labels))
    counts = confusion_counts(preds, golds, universe)
    label_f1 = per_label_f1(counts)
    train_counts = {lid: 0 for lid in universe}
    for pos in positives:
        for lid in pos:
            train_counts[lid] += 1

    per_layer = []
    for m in range(1, hier.depth + 1):
        ids = set(hier.layer_ids(m))
        layer_preds = [p & ids for p in preds]
        layer_golds = [g & ids for g in golds]
        lm_micro, lm_macro = micro_macro_f1(
            layer_preds, layer_golds, sorted(ids),
            include_zero_support=config.include_zero_support,
        )
        per_layer.append({"layer": m, "micro_f1": lm_micro, "macro_f1": lm_macro})

    name = {n.id: n.name for n in hier.nodes}
    metrics = RunMetrics(
        micro_f1=micro,
        macro_f1=macro,
        per_layer=per_layer,
        depth_clusters=cluster_report(label_f1, hier, train_counts, "depth"),
        frequency_clusters=cluster_report(label_f1, hier, train_counts, "frequency"),
        loss_curve=loss_curve,
        dev_curve=dev_curve,
        best_epoch=best_epoch,
        label_f1={name[lid]: f for lid, f in label_f1.items()},
        confusion={name[lid]: list(c) for lid, c in counts.items()},
        train_counts={name[lid]: c for lid, c in train_counts.items()},
    )
    return model, metrics


def nearest_words(
    label: str,
    verbs: VerbalizerTable,
    embed_table: torch.Tensor,
    vocab: Vocabulary,
    k: int = 8,
) -> list[tuple[str, float]]:
    """Top-k vocabulary words by cosine similarity to a label's virtual
    word, reserved tokens excluded."""
    if label not in verbs.hier.name_to_id:
        raise UnknownLabel(f"unknown label: {label!r}")
    lid = verbs.hier.name_to_id[label]
    with torch.no_grad():
        v = verbs.embeddings[lid]
        table = embed_table[NUM_RESERVED:]
        sims = torch.nn.functional.cosine_similarity(table, v.unsqueeze(0), dim=1)
        k = min(k, table.shape[0])
        top = torch.topk(sims, k)
    return [
        (vocab.id_to_token[NUM_RESERVED + int(i)], float(s))
        for s, i in zip(top.values, top.indices)
    ]


def low_resource_run(
    config: RunConfig,
    hier: LabelHierarchy,
    datasets: dict[str, Sequence[Example]],
    fraction: float = 0.10,
    seeds: Sequence[int] = (0, 1, 2),
    verbalizer_map: Optional[dict[str, str]] = None,
) -> dict:
    """Train on a uniform sample of the training split for each seed and
    report mean and standard deviation of the test metrics."""
    if not 0.0 < fraction <= 1.0:
        raise FractionOutOfRange(f"fraction must lie in (0, 1], got {fraction}")
    train_set = list(datasets.get("train", ()))
    if not train_set:
        raise EmptyDataset("training split is empty")
    n_sample = math.floor(fraction * len(train_set))
    if n_sample < 1:
        raise FractionOutOfRange(f"fraction {fraction} selects no examples")

    runs = []
    for seed in seeds:
        sampler = random.Random(seed)
        indices = sorted(sampler.sample(range(len(train_set)), n_sample))
        sub = dict(datasets)
        sub["train"] = [train_set[i] for i in indices]
        run_cfg = copy.deepcopy(config)
        run_cfg.seed = seed
        _, metrics = train(run_cfg, hier, sub, verbalizer_map=verbalizer_map)
        runs.append(
            {"seed": seed, "micro_f1": metrics.micro_f1, "macro_f1": metrics.macro_f1}
        )

    def agg(key):
        vals = [r[key] for r in runs]
        return {
            "mean": statistics.fmean(vals),
            "std": statistics.pstdev(vals) if len(vals) > 1 else 0.0,
        }

    return {
        "fraction": fraction,
        "sample_size": n_sample,
        "seeds": list(seeds),
        "runs": runs,
        "micro_f1": agg("micro_f1"),
        "macro_f1": agg("macro_f1"),
    }


# --- checkpointing ---

def save_checkpoint(
    out_dir: str | Path,
    model: HtcModel,
    config: RunConfig,
    taxonomy_records: Sequence[tuple[str, str]],
    verbalizer_map: Optional[dict[str, str]] = None,
) -> Path:
    """Write parameter archive, vocabulary, taxonomy and manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), out / "model.pt")
    model.vocab.save(out / "vocab.txt")
    write_taxonomy(out / "taxonomy.tsv", taxonomy_records)
    manifest = {
        "toolkit_version": __version__,
        "seed": config.seed,
        "config": config.to_dict(),
        "verbalizer_map": verbalizer_map,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )
    return out


def load_checkpoint(ckpt_dir: str | Path) -> tuple[HtcModel, RunConfig, LabelHierarchy]:
    ckpt = Path(ckpt_dir)
    manifest = json.loads((ckpt / "manifest.json").read_text(encoding="utf-8"))
    config = RunConfig.from_dict(manifest["config"])
    vocab = Vocabulary.load(ckpt / "vocab.txt")
    hier = load_taxonomy(read_taxonomy_file(ckpt / "taxonomy.tsv"))
    model = HtcModel(
        hier,
        vocab,
        config.encoder_config(len(vocab)),
        config.model_config(),
        verbalizer_map=manifest.get("verbalizer_map"),
    )
    model.load_state_dict(torch.load(ckpt / "model.pt", weights_only=True))
    model.eval()
    return model, config, hier
