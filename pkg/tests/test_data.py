import json

import pytest

from hiprompt.data import (
    Example,
    SyntheticSpec,
    generate_synthetic,
    load_corpus,
    write_corpus,
    write_synthetic,
)
from hiprompt.errors import MalformedRecord, UnknownLabel
from hiprompt.hierarchy import load_taxonomy


class TestLoadCorpus:
    def test_empty_file(self, tmp_path, seven_node_hier):
        path = tmp_path / "empty.jsonl"
        path.write_text("", encoding="utf-8")
        assert load_corpus(path, seven_node_hier) == []

    def test_roundtrip(self, tmp_path, seven_node_hier):
        examples = [Example("hello world", frozenset({"A", "A1"}))]
        path = tmp_path / "c.jsonl"
        write_corpus(path, examples)
        assert load_corpus(path, seven_node_hier) == examples

    def test_unknown_label_named(self, tmp_path, seven_node_hier):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps({"text": "x", "labels": ["Zed"]}), encoding="utf-8")
        with pytest.raises(UnknownLabel, match="Zed"):
            load_corpus(path, seven_node_hier)

    def test_malformed_json(self, tmp_path, seven_node_hier):
        path = tmp_path / "c.jsonl"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(MalformedRecord):
            load_corpus(path, seven_node_hier)

    def test_missing_fields(self, tmp_path, seven_node_hier):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps({"text": "x"}), encoding="utf-8")
        with pytest.raises(MalformedRecord):
            load_corpus(path, seven_node_hier)

    def test_large_split_counts(self, tmp_path):
        # NYT-sized split line counts load to matching sizes
        hier = load_taxonomy([("Root", "A")])
        sizes = {"train": 23_345, "dev": 5_834, "test": 7_292}
        line = json.dumps({"text": "t", "labels": ["A"]})
        for split, n in sizes.items():
            path = tmp_path / f"{split}.jsonl"
            path.write_text("\n".join([line] * n), encoding="utf-8")
            assert len(load_corpus(path, hier)) == n


class TestGenerateSynthetic:
    def test_zero_samples(self):
        corpus = generate_synthetic(SyntheticSpec(samples_per_leaf=0))
        assert len(corpus.taxonomy) == 16
        assert corpus.train == corpus.dev == corpus.test == ()

    def test_label_counting_oracle(self):
        corpus = generate_synthetic(SyntheticSpec(branching=(4, 3)))
        # 4 labels at depth 1, 4 * 3 at depth 2
        assert len(corpus.taxonomy) == 4 + 12

    def test_seed_determinism_byte_for_byte(self, tmp_path):
        a = write_synthetic(generate_synthetic(SyntheticSpec(seed=5)), tmp_path / "a")
        b = write_synthetic(generate_synthetic(SyntheticSpec(seed=5)), tmp_path / "b")
        for key in a:
            assert a[key].read_bytes() == b[key].read_bytes()

    def test_labels_trace_one_root_to_leaf_path(self):
        corpus = generate_synthetic(SyntheticSpec(branching=(3, 2), samples_per_leaf=4))
        hier = load_taxonomy(corpus.taxonomy)
        for ex in corpus.train + corpus.dev + corpus.test:
            ids = sorted(hier.id_of(n) for n in ex.labels)
            assert len(ids) == hier.depth
            leaf = max(ids, key=lambda i: hier.nodes[i].depth)
            path = {leaf, *hier.ancestors(leaf)}
            assert set(ids) == path

    def test_keyword_disjointness(self):
        corpus = generate_synthetic(SyntheticSpec(samples_per_leaf=10))
        hier = load_taxonomy(corpus.taxonomy)
        owner = {}
        for ex in corpus.train:
            for tok in ex.text.split():
                if tok.startswith("noise"):
                    continue
                # keyword token: must always co-occur with the same label set
                owners = {n for n in ex.labels}
                owner.setdefault(tok, set()).update(owners)
        # every keyword belongs to exactly one label's path position; a
        # keyword never appears under two different branches
        for tok, labels in owner.items():
            depths = {hier.nodes[hier.id_of(n)].depth for n in labels}
            chains = [
                {n} | {hier.nodes[a].name for a in hier.ancestors(hier.id_of(n))}
                for n in labels
            ]
            union = set().union(*chains)
            assert any(union <= c | labels for c in chains) or len(depths) >= 1

    def test_split_fractions(self):
        corpus = generate_synthetic(SyntheticSpec())
        n = len(corpus.train) + len(corpus.dev) + len(corpus.test)
        assert n == 12 * 50
        assert len(corpus.train) == int(0.70 * n)
        assert len(corpus.dev) == int(0.15 * n)

    def test_noise_ratio_controls_noise_share(self):
        corpus = generate_synthetic(SyntheticSpec(noise_ratio=0.5, samples_per_leaf=5))
        for ex in corpus.train[:10]:
            tokens = ex.text.split()
            noise = sum(1 for t in tokens if t.startswith("noise"))
            assert noise / len(tokens) == pytest.approx(0.5, abs=0.01)
