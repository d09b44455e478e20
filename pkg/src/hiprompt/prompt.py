"""Prompt assembly and verbalizers.

The layered layout wraps the text with one (template, prediction-slot)
pair per hierarchy layer:

    [CLS] x_1 .. x_N [SEP] t'_1 [PRED] t'_2 [PRED] ... t'_L [PRED] [SEP]

The prediction slot embedding is one shared learnable vector initialized
from the MASK embedding. Baseline layouts for hard prompt, soft prompt and
vanilla fine tuning are assembled here too.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor, nn

from .encoder import CLS, MASK, SEP, TinyEncoder, Vocabulary, word_split
from .errors import LayerOutOfRange, MissingVerbalizerMap, TemplateOverflow
from .hierarchy import LabelHierarchy

HARD_PROMPT_WORDS = ("the", "text", "is", "about")
SOFT_PROMPT_LENGTH = 8


@dataclass(frozen=True)
class PromptLayout:
    """Positions of every slot in an assembled input sequence."""

    length: int
    text_span: tuple[int, int]  # [start, end) of the text tokens
    template_positions: tuple[int, ...]
    pred_positions: tuple[int, ...]
    cls_position: int = 0

    @property
    def num_slots(self) -> int:
        return len(self.pred_positions)


def hpt_layout(num_text: int, num_layers: int) -> PromptLayout:
    """Slot positions for the layered template; total length N + 2L + 3."""
    n, L = num_text, num_layers
    templates = tuple(n + 2 + 2 * i for i in range(L))
    preds = tuple(p + 1 for p in templates)
    return PromptLayout(
        length=n + 2 * L + 3,
        text_span=(1, 1 + n),
        template_positions=templates,
        pred_positions=preds,
    )


def max_text_length(max_len: int, num_layers: int) -> int:
    """Text budget once the template and special tokens are reserved."""
    budget = max_len - (2 * num_layers + 3)
    if budget < 1:
        raise TemplateOverflow(
            f"hierarchy depth {num_layers} leaves no room for text at max_len {max_len}"
        )
    return budget


def assemble_hpt_input(
    text_ids: Tensor | list[int],
    injected_templates: Tensor,
    pred_embedding: Tensor,
    encoder: TinyEncoder,
) -> tuple[Tensor, PromptLayout]:
    """Embed and lay out one instance for the layered prompt.

    ``injected_templates`` is (L, d) (already hierarchy-injected); rows at
    the template positions of the output are these vectors unchanged.
    Positional embeddings are added later, inside the encoder.
    """
    text_ids = torch.as_tensor(text_ids, dtype=torch.long)
    n = int(text_ids.numel())
    L = injected_templates.shape[0]
    layout = hpt_layout(n, L)
    if layout.length > encoder.cfg.max_len:
        raise TemplateOverflow(
            f"assembled length {layout.length} > max_len {encoder.cfg.max_len}; "
            "truncate the text first"
        )
    special = encoder.tok_emb.weight
    rows = [special[CLS].unsqueeze(0)]
    if n:
        rows.append(encoder.embed_tokens(text_ids, add_positions=False))
    rows.append(special[SEP].unsqueeze(0))
    for i in range(L):
        rows.append(injected_templates[i].unsqueeze(0))
        rows.append(pred_embedding.unsqueeze(0))
    rows.append(special[SEP].unsqueeze(0))
    return torch.cat(rows, dim=0), layout


class VerbalizerTable(nn.Module):
    """Learnable virtual label words and per-label biases.

    Each label belongs to exactly one layer; scoring a slot only ever uses
    the labels of that slot's layer.
    """

    def __init__(self, hier: LabelHierarchy, dim: int):
        super().__init__()
        self.hier = hier
        self.embeddings = nn.Parameter(torch.zeros(hier.num_labels, dim))
        self.biases = nn.Parameter(torch.zeros(hier.num_labels))
        layer_ids = [hier.layer_ids(m) for m in range(1, hier.depth + 1)]
        self._layer_ids = layer_ids
        for m, ids in enumerate(layer_ids, start=1):
            self.register_buffer(
                f"_layer_{m}", torch.as_tensor(ids, dtype=torch.long), persistent=False
            )

    @property
    def num_layers(self) -> int:
        return len(self._layer_ids)

    def layer_label_ids(self, m: int) -> list[int]:
        """Sorted label ids scored at layer m (1-based)."""
        if not 1 <= m <= self.num_layers:
            raise LayerOutOfRange(f"layer {m} outside 1..{self.num_layers}")
        return self._layer_ids[m - 1]

    def layer_scores(self, hidden_pred: Tensor, m: int) -> Tensor:
        """Scores for the labels of layer m from its slot's hidden state.

        Args:
            hidden_pred: (d,) or (B, d) hidden state(s) of the m-th slot.
        Returns:
            (|layer m|,) or (B, |layer m|) scores, ordered by label id.
        """
        ids = getattr(self, f"_layer_{m}") if 1 <= m <= self.num_layers else None
        if ids is None:
            raise LayerOutOfRange(f"layer {m} outside 1..{self.num_layers}")
        v = self.embeddings[ids]
        b = self.biases[ids]
        return hidden_pred @ v.t() + b


def init_verbalizers(
    hier: LabelHierarchy, encoder: TinyEncoder, vocab: Vocabulary
) -> VerbalizerTable:
    """Verbalizer table with each label word initialized to the mean of its
    name's token embeddings and all biases at zero."""
    table = VerbalizerTable(hier, encoder.dim)
    with torch.no_grad():
        for node in hier.nodes:
            ids = [vocab.lookup(tok) for tok in word_split(node.name)]
            table.embeddings[node.id] = encoder.tok_emb.weight[ids].mean(dim=0)
    return table


def layer_scores(
    hidden: Tensor, layout: PromptLayout, verbs: VerbalizerTable, m: int
) -> Tensor:
    """Scores for layer m from a full (M, d) hidden-state matrix."""
    if not 1 <= m <= layout.num_slots:
        raise LayerOutOfRange(f"layer {m} outside 1..{layout.num_slots}")
    return verbs.layer_scores(hidden[..., layout.pred_positions[m - 1], :], m)


def load_verbalizer_map(path) -> dict[str, str]:
    """Hard-prompt verbalizer file: UTF-8 lines `label<TAB>word`."""
    from pathlib import Path

    mapping = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        label, word = line.split("\t")
        mapping[label] = word
    return mapping


def assemble_baseline_input(
    text_ids: Tensor | list[int],
    kind: str,
    encoder: TinyEncoder,
    soft_templates: Tensor | None = None,
    vocab: Vocabulary | None = None,
) -> tuple[Tensor, PromptLayout]:
    """Lay out one instance for a baseline variant.

    * ``hard``: [CLS] x [SEP] the text is about [MASK] [SEP], one slot
      scored through the MLM head (verbalizer map supplied elsewhere).
    * ``soft``: [CLS] x [SEP] V1..V8 [MASK] [SEP] with learnable template
      words passed as ``soft_templates`` (8, d).
    * ``finetune``: [CLS] x [SEP], prediction from the CLS hidden state.
    """
    text_ids = torch.as_tensor(text_ids, dtype=torch.long)
    n = int(text_ids.numel())
    special = encoder.tok_emb.weight
    text_rows = (
        [encoder.embed_tokens(text_ids, add_positions=False)] if n else []
    )

    if kind == "finetune":
        rows = [special[CLS].unsqueeze(0), *text_rows, special[SEP].unsqueeze(0)]
        layout = PromptLayout(
            length=n + 2,
            text_span=(1, 1 + n),
            template_positions=(),
            pred_positions=(0,),  # CLS pooling
        )
    elif kind == "hard":
        if vocab is None:
            raise MissingVerbalizerMap("hard prompt needs the vocabulary")
        # Template words may be out of vocabulary for tiny corpora; they
        # fall back to UNK, which keeps the layout intact.
        word_ids = [vocab.lookup(w) for w in HARD_PROMPT_WORDS]
        word_rows = special[torch.as_tensor(word_ids, dtype=torch.long)]
        rows = [
            special[CLS].unsqueeze(0),
            *text_rows,
            special[SEP].unsqueeze(0),
            word_rows,
            special[MASK].unsqueeze(0),
            special[SEP].unsqueeze(0),
        ]
        k = len(HARD_PROMPT_WORDS)
        layout = PromptLayout(
            length=n + k + 4,
            text_span=(1, 1 + n),
            template_positions=tuple(range(n + 2, n + 2 + k)),
            pred_positions=(n + 2 + k,),
        )
    elif kind == "soft":
        if soft_templates is None or soft_templates.shape[0] != SOFT_PROMPT_LENGTH:
            raise MissingVerbalizerMap(
                f"soft prompt needs {SOFT_PROMPT_LENGTH} template embeddings"
            )
        rows = [
            special[CLS].unsqueeze(0),
            *text_rows,
            special[SEP].unsqueeze(0),
            soft_templates,
            special[MASK].unsqueeze(0),
            special[SEP].unsqueeze(0),
        ]
        k = SOFT_PROMPT_LENGTH
        layout = PromptLayout(
            length=n + k + 4,
            text_span=(1, 1 + n),
            template_positions=tuple(range(n + 2, n + 2 + k)),
            pred_positions=(n + 2 + k,),
        )
    else:
        raise MissingVerbalizerMap(f"unknown baseline kind: {kind!r}")

    seq = torch.cat(rows, dim=0)
    if seq.shape[0] > encoder.cfg.max_len:
        raise TemplateOverflow(
            f"assembled length {seq.shape[0]} > max_len {encoder.cfg.max_len}"
        )
    return seq, layout
