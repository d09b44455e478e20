"""Masked-language-model encoder: vocabulary, tokenizer, and a small
trainable transformer so the whole pipeline runs on CPU.

The built-in encoder is intentionally tiny (2 blocks, width 64 by default).
Pretrained encoders plug in through :class:`ExternalEncoder`, a declared
interface with no bundled weights.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence, runtime_checkable

import torch
from torch import Tensor, nn

from .errors import IdOutOfRange, LengthExceeded, PositionOutOfRange

PAD, UNK, CLS, SEP, MASK = 0, 1, 2, 3, 4
RESERVED_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]")
NUM_RESERVED = len(RESERVED_TOKENS)

_WORD_RE = re.compile(r"\w+|[^\w\s]")


def word_split(text: str) -> list[str]:
    """Lowercased whitespace-and-punctuation word split."""
    return _WORD_RE.findall(text.lower())


@dataclass
class Vocabulary:
    """Dense token->id map with fixed reserved ids 0..4."""

    token_to_id: dict[str, int]
    id_to_token: list[str]

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "Vocabulary":
        id_to_token = list(RESERVED_TOKENS)
        token_to_id = {t: i for i, t in enumerate(id_to_token)}
        for tok in tokens:
            if tok not in token_to_id:
                token_to_id[tok] = len(id_to_token)
                id_to_token.append(tok)
        return cls(token_to_id, id_to_token)

    @classmethod
    def from_corpus(cls, texts: Sequence[str]) -> "Vocabulary":
        return cls.from_tokens([tok for text in texts for tok in word_split(text)])

    def __len__(self) -> int:
        return len(self.id_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.id_to_token) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        id_to_token = Path(path).read_text(encoding="utf-8").splitlines()
        assert id_to_token[:NUM_RESERVED] == list(RESERVED_TOKENS)
        return cls({t: i for i, t in enumerate(id_to_token)}, id_to_token)


def tokenize(text: str, vocab: Vocabulary, max_len: Optional[int] = None) -> list[int]:
    """Word-level tokenization; unknown words map to UNK; optional truncation."""
    ids = [vocab.lookup(tok) for tok in word_split(text)]
    if max_len is not None:
        ids = ids[:max_len]
    return ids


@dataclass
class EncoderConfig:
    vocab_size: int
    dim: int = 64
    num_blocks: int = 2
    num_heads: int = 4
    ffn_dim: int = 128
    max_len: int = 128
    dropout: float = 0.1
    tied_mlm: bool = True

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class TransformerBlock(nn.Module):
    """Pre-LN self-attention block."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.dim)
        self.attn = nn.MultiheadAttention(
            cfg.dim, cfg.num_heads, dropout=cfg.dropout, batch_first=True
        )
        self.ln2 = nn.LayerNorm(cfg.dim)
        self.ffn = nn.Sequential(
            nn.Linear(cfg.dim, cfg.ffn_dim),
            nn.GELU(),
            nn.Linear(cfg.ffn_dim, cfg.dim),
        )
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x: Tensor, pad_mask: Optional[Tensor]) -> Tensor:
        h = self.ln1(x)
        attn_out, _ = self.attn(h, h, h, key_padding_mask=pad_mask, need_weights=False)
        x = x + self.drop(attn_out)
        x = x + self.drop(self.ffn(self.ln2(x)))
        return x


class TinyEncoder(nn.Module):
    """Small bidirectional transformer with an MLM head.

    The MLM head ties its projection to the token embedding table by
    default; an untied linear head is available for diagnostics.
    """

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.tok_emb = nn.Embedding(cfg.vocab_size, cfg.dim)
        self.pos_emb = nn.Embedding(cfg.max_len, cfg.dim)
        self.blocks = nn.ModuleList(TransformerBlock(cfg) for _ in range(cfg.num_blocks))
        self.final_ln = nn.LayerNorm(cfg.dim)
        if cfg.tied_mlm:
            self.mlm_bias = nn.Parameter(torch.zeros(cfg.vocab_size))
            self.mlm_head = None
        else:
            self.mlm_head = nn.Linear(cfg.dim, cfg.vocab_size)
        nn.init.normal_(self.tok_emb.weight, std=0.02)
        nn.init.normal_(self.pos_emb.weight, std=0.02)

    @property
    def dim(self) -> int:
        return self.cfg.dim

    def mask_embedding(self) -> Tensor:
        return self.tok_emb.weight[MASK]

    def embed_tokens(self, ids: Tensor, add_positions: bool = True) -> Tensor:
        """Embedding rows for a 1-D id sequence, optionally with learned
        absolute positions added."""
        ids = torch.as_tensor(ids, dtype=torch.long)
        if ids.numel() > 0 and (ids.min() < 0 or ids.max() >= self.cfg.vocab_size):
            raise IdOutOfRange(f"token ids must lie in [0, {self.cfg.vocab_size})")
        if ids.numel() == 0:
            return self.tok_emb.weight.new_zeros((0, self.cfg.dim))
        out = self.tok_emb(ids)
        if add_positions:
            if ids.shape[-1] > self.cfg.max_len:
                raise LengthExceeded(
                    f"sequence length {ids.shape[-1]} > max_len {self.cfg.max_len}"
                )
            positions = torch.arange(ids.shape[-1], device=out.device)
            out = out + self.pos_emb(positions)
        return out

    def encode(
        self,
        seq: Tensor,
        pad_mask: Optional[Tensor] = None,
        add_positions: bool = True,
    ) -> Tensor:
        """Contextualize an embedded sequence.

        Args:
            seq: (M, d) or (B, M, d) embedding rows.
            pad_mask: optional bool (B, M), True at PAD positions.
            add_positions: add learned position embeddings before the blocks.
        Returns:
            hidden states with the same leading shape as ``seq``.
        """
        squeeze = seq.dim() == 2
        if squeeze:
            seq = seq.unsqueeze(0)
        M = seq.shape[1]
        if M > self.cfg.max_len:
            raise LengthExceeded(f"sequence length {M} > max_len {self.cfg.max_len}")
        x = seq
        if add_positions:
            x = x + self.pos_emb(torch.arange(M, device=seq.device))
        for block in self.blocks:
            x = block(x, pad_mask)
        x = self.final_ln(x)
        return x.squeeze(0) if squeeze else x

    def mlm_logits(self, hidden: Tensor, positions: Sequence[int]) -> Tensor:
        """Vocabulary scores at the requested positions of a (M, d) hidden
        matrix; returns (len(positions), V)."""
        M = hidden.shape[-2]
        for p in positions:
            if not 0 <= p < M:
                raise PositionOutOfRange(f"position {p} outside [0, {M})")
        if len(positions) == 0:
            return hidden.new_zeros((0, self.cfg.vocab_size))
        rows = hidden[..., list(positions), :]
        return self.project_vocab(rows)

    def project_vocab(self, rows: Tensor) -> Tensor:
        """MLM head projection of (..., d) rows to (..., V) scores."""
        if self.mlm_head is not None:
            return self.mlm_head(rows)
        return rows @ self.tok_emb.weight.t() + self.mlm_bias


@runtime_checkable
class ExternalEncoder(Protocol):
    """Adapter seam for pretrained masked-language-model encoders.

    Implementations wrap an external model (and its subword tokenizer)
    behind the same four operations the built-in encoder exposes. No
    weights ship with the toolkit.
    """

    @property
    def dim(self) -> int: ...

    def tokenize(self, text: str, max_len: Optional[int] = None) -> list[int]: ...

    def embed_tokens(self, ids: Tensor, add_positions: bool = True) -> Tensor: ...

    def encode(
        self,
        seq: Tensor,
        pad_mask: Optional[Tensor] = None,
        add_positions: bool = True,
    ) -> Tensor: ...

    def mlm_logits(self, hidden: Tensor, positions: Sequence[int]) -> Tensor: ...

    def mask_embedding(self) -> Tensor: ...
