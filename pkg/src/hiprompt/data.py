"""Corpus loading and the synthetic hierarchical-corpus generator.

Dataset files are UTF-8 JSON lines with fields ``text`` (string) and
``labels`` (array of strings), so exports of the common HTC corpora drop
in unchanged.

The synthetic generator builds a complete b-ary taxonomy where every label
owns a disjoint keyword set. An example for a leaf concatenates keywords
sampled from every label on its root-to-leaf path plus shared noise words,
so the task is separable by construction and near-perfect F1 is reachable.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import MalformedRecord, UnknownLabel
from .hierarchy import ROOT_NAME, LabelHierarchy


@dataclass(frozen=True)
class Example:
    text: str
    labels: frozenset[str]


@dataclass(frozen=True)
class SyntheticSpec:
    branching: tuple[int, ...] = (4, 3)  # per-layer fan-out
    samples_per_leaf: int = 50
    keywords_per_label: int = 5
    noise_ratio: float = 0.5
    seed: int = 0
    draws_per_label: int = 3
    noise_vocab_size: int = 50

    @property
    def depth(self) -> int:
        return len(self.branching)

    def __post_init__(self):
        assert self.depth >= 1 and self.samples_per_leaf >= 0
        assert 0.0 <= self.noise_ratio < 1.0


@dataclass(frozen=True)
class SyntheticCorpus:
    taxonomy: tuple[tuple[str, str], ...]
    train: tuple[Example, ...]
    dev: tuple[Example, ...]
    test: tuple[Example, ...]


def load_corpus(path: str | Path, hier: LabelHierarchy) -> list[Example]:
    """Parse a JSONL corpus, validating every label against the hierarchy."""
    examples = []
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), 1
    ):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"{path}:{lineno}: invalid JSON: {exc}") from None
        if (
            not isinstance(record, dict)
            or not isinstance(record.get("text"), str)
            or not isinstance(record.get("labels"), list)
        ):
            raise MalformedRecord(
                f"{path}:{lineno}: record needs string `text` and list `labels`"
            )
        for name in record["labels"]:
            if name not in hier.name_to_id:
                raise UnknownLabel(f"{path}:{lineno}: unknown label {name!r}")
        examples.append(Example(record["text"], frozenset(record["labels"])))
    return examples


def write_corpus(path: str | Path, examples: Sequence[Example]) -> None:
    lines = [
        json.dumps({"text": ex.text, "labels": sorted(ex.labels)}, sort_keys=True)
        for ex in examples
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def write_taxonomy(path: str | Path, records: Sequence[tuple[str, str]]) -> None:
    Path(path).write_text(
        "".join(f"{p}\t{c}\n" for p, c in records), encoding="utf-8"
    )


def generate_synthetic(spec: SyntheticSpec) -> SyntheticCorpus:
    """Build taxonomy records and seed-deterministic 70/15/15 splits."""
    rng = random.Random(spec.seed)

    # Complete taxonomy: layer-d label k is "<parent>x<k>" with layer-1
    # roots "c0".."c{b1-1}".
    records: list[tuple[str, str]] = []
    paths: list[list[str]] = [[]]
    for b in spec.branching:
        new_paths = []
        for path in paths:
            parent = path[-1] if path else ROOT_NAME
            for k in range(b):
                child = f"{parent}x{k}" if path else f"c{k}"
                records.append((parent, child))
                new_paths.append(path + [child])
        paths = new_paths
    labels = [child for _, child in records]

    keyword_sets = {
        name: [f"kw{i}n{j}" for j in range(spec.keywords_per_label)]
        for i, name in enumerate(labels)
    }
    noise_words = [f"noise{j}" for j in range(spec.noise_vocab_size)]

    examples = []
    for path in paths:  # leaf paths, one per complete branch
        for _ in range(spec.samples_per_leaf):
            tokens = []
            for name in path:
                tokens.extend(
                    rng.choices(keyword_sets[name], k=spec.draws_per_label)
                )
            n_noise = round(spec.noise_ratio / (1 - spec.noise_ratio) * len(tokens))
            tokens.extend(rng.choices(noise_words, k=n_noise))
            rng.shuffle(tokens)
            examples.append(Example(" ".join(tokens), frozenset(path)))

    rng.shuffle(examples)
    n = len(examples)
    n_train, n_dev = int(0.70 * n), int(0.15 * n)
    return SyntheticCorpus(
        taxonomy=tuple(records),
        train=tuple(examples[:n_train]),
        dev=tuple(examples[n_train : n_train + n_dev]),
        test=tuple(examples[n_train + n_dev :]),
    )


def write_synthetic(corpus: SyntheticCorpus, out_dir: str | Path) -> dict[str, Path]:
    """Write taxonomy.tsv and the three JSONL splits; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"taxonomy": out / "taxonomy.tsv"}
    write_taxonomy(paths["taxonomy"], corpus.taxonomy)
    for split in ("train", "dev", "test"):
        paths[split] = out / f"{split}.jsonl"
        write_corpus(paths[split], getattr(corpus, split))
    return paths
