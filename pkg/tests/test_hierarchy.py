import random
from collections import deque

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiprompt.errors import (
    CycleDetected,
    Disconnected,
    MultipleParents,
    UnknownLabel,
    UnknownScheme,
)
from hiprompt.hierarchy import (
    build_augmented_graph,
    load_taxonomy,
    positives_per_layer,
    read_taxonomy_file,
)

from conftest import SEVEN_NODE_RECORDS


def bfs_depths(records):
    """Independent breadth-first depth oracle over the raw edge list."""
    children = {}
    for p, c in records:
        children.setdefault(p, []).append(c)
    depths = {}
    queue = deque([("Root", 0)])
    while queue:
        name, d = queue.popleft()
        for c in children.get(name, []):
            depths[c] = d + 1
            queue.append((c, d + 1))
    return depths


def wos_shaped_records():
    """141 labels over two layers, mirroring the WOS taxonomy shape."""
    records = [("Root", f"domain{i}") for i in range(7)]
    k = 0
    while len(records) < 141:
        records.append((f"domain{k % 7}", f"area{k}"))
        k += 1
    return records


class TestLoadTaxonomy:
    def test_wos_shaped(self):
        hier = load_taxonomy(wos_shaped_records())
        assert hier.num_labels == 141
        assert hier.depth == 2

    def test_single_record(self):
        hier = load_taxonomy([("Root", "A")])
        assert hier.num_labels == 1
        assert hier.depth == 1
        assert [sorted(s) for s in hier.layers] == [[0]]

    def test_seven_node_tree_matches_bfs_oracle(self, seven_node_hier):
        hier = seven_node_hier
        oracle = bfs_depths(SEVEN_NODE_RECORDS)
        assert hier.depth == 2
        assert {hier.nodes[i].name for i in hier.layers[0]} == {"A", "B"}
        assert {hier.nodes[i].name for i in hier.layers[1]} == {"A1", "A2", "B1", "B2"}
        for node in hier.nodes:
            assert node.depth == oracle[node.name]

    def test_cycle_detected(self):
        with pytest.raises(CycleDetected):
            load_taxonomy([("Root", "A"), ("B", "C"), ("C", "B")])

    def test_multiple_parents(self):
        with pytest.raises(MultipleParents):
            load_taxonomy([("Root", "A"), ("Root", "B"), ("A", "C"), ("B", "C")])

    def test_disconnected(self):
        with pytest.raises(Disconnected):
            load_taxonomy([("Root", "A"), ("Ghost", "B")])

    def test_empty_records(self):
        with pytest.raises(Disconnected):
            load_taxonomy([])

    def test_deterministic_id_assignment(self):
        a = load_taxonomy(SEVEN_NODE_RECORDS)
        b = load_taxonomy(SEVEN_NODE_RECORDS)
        assert [n.name for n in a.nodes] == [n.name for n in b.nodes]

    def test_file_parsing(self, tmp_path):
        path = tmp_path / "tax.tsv"
        path.write_text("# comment\nRoot\tA\n\nA\tB\n", encoding="utf-8")
        hier = load_taxonomy(read_taxonomy_file(path))
        assert hier.num_labels == 2
        assert hier.depth == 2


class TestAugmentedGraph:
    def test_same_depth(self, seven_node_hier):
        hier = seven_node_hier
        g = build_augmented_graph(hier, "same-depth")
        adj = g.adjacency()
        layer1 = {hier.id_of("A"), hier.id_of("B")}
        layer2 = {hier.id_of(n) for n in ("A1", "A2", "B1", "B2")}
        assert adj[g.virtual_id(1)] == layer1
        assert adj[g.virtual_id(2)] == layer2

    def test_depth_increasing_edge_count_oracle(self):
        records = [("Root", "A"), ("A", "B"), ("A", "C"), ("B", "D"), ("C", "E")]
        hier = load_taxonomy(records)
        assert hier.depth == 3
        g = build_augmented_graph(hier, "depth-increasing")
        adj = g.adjacency()
        # counting oracle: t_3 touches every label of depth <= 3
        expected = sum(len(hier.layers[m]) for m in range(3))
        virtual_neighbors = {v for v in adj[g.virtual_id(3)] if v < hier.num_labels}
        assert len(virtual_neighbors) == expected

    def test_random_deterministic(self, seven_node_hier):
        g1 = build_augmented_graph(seven_node_hier, "random", seed=7)
        g2 = build_augmented_graph(seven_node_hier, "random", seed=7)
        assert g1.virtual_edges == g2.virtual_edges

    def test_random_adds_one_edge_per_label(self, seven_node_hier):
        base = build_augmented_graph(seven_node_hier, "same-depth")
        rand = build_augmented_graph(seven_node_hier, "random", seed=3)
        assert len(rand.virtual_edges) == len(base.virtual_edges) + seven_node_hier.num_labels

    def test_unknown_scheme(self, seven_node_hier):
        with pytest.raises(UnknownScheme):
            build_augmented_graph(seven_node_hier, "star")

    def test_random_requires_seed(self, seven_node_hier):
        with pytest.raises(UnknownScheme):
            build_augmented_graph(seven_node_hier, "random")

    def test_tree_edges_preserved(self, seven_node_hier):
        g = build_augmented_graph(seven_node_hier, "same-depth")
        assert set(g.label_edges) == set(seven_node_hier.edges())


class TestPositivesPerLayer:
    def test_empty(self, seven_node_hier):
        assert positives_per_layer(set(), seven_node_hier) == [set(), set()]

    def test_path_one_positive_per_layer(self):
        # four-layer path as in the NYT sports example
        records = [
            ("Root", "News"),
            ("News", "Sports"),
            ("Sports", "Hockey"),
            ("Hockey", "National Hockey League"),
        ]
        hier = load_taxonomy(records)
        layers = positives_per_layer({"National Hockey League"}, hier, closure=True)
        assert [len(s) for s in layers] == [1, 1, 1, 1]

    def test_closure_flag(self, seven_node_hier):
        hier = seven_node_hier
        closed = positives_per_layer({"A1"}, hier, closure=True)
        assert closed == [{hier.id_of("A")}, {hier.id_of("A1")}]
        open_ = positives_per_layer({"A1"}, hier, closure=False)
        assert open_[0] == set()
        assert open_[1] == {hier.id_of("A1")}

    def test_unknown_label(self, seven_node_hier):
        with pytest.raises(UnknownLabel):
            positives_per_layer({"nope"}, seven_node_hier)


@st.composite
def random_tree_records(draw):
    n = draw(st.integers(min_value=1, max_value=25))
    rng = random.Random(draw(st.integers(min_value=0, max_value=10**6)))
    names = [f"n{i}" for i in range(n)]
    records = []
    for i, name in enumerate(names):
        parent = "Root" if i == 0 else rng.choice(["Root"] + names[:i])
        records.append((parent, name))
    return records


@settings(max_examples=50, deadline=None)
@given(random_tree_records())
def test_layers_partition_property(records):
    hier = load_taxonomy(records)
    union = set().union(*hier.layers)
    assert union == set(range(hier.num_labels))
    assert sum(len(s) for s in hier.layers) == hier.num_labels


@settings(max_examples=30, deadline=None)
@given(random_tree_records())
def test_same_depth_virtual_nodes_share_no_neighbor(records):
    hier = load_taxonomy(records)
    g = build_augmented_graph(hier, "same-depth")
    adj = g.adjacency()
    for i in range(1, hier.depth + 1):
        for j in range(i + 1, hier.depth + 1):
            assert not (adj[g.virtual_id(i)] & adj[g.virtual_id(j)])


@settings(max_examples=30, deadline=None)
@given(random_tree_records(), st.integers(min_value=0, max_value=10**6))
def test_closure_gives_parent_at_previous_depth(records, pick):
    hier = load_taxonomy(records)
    rng = random.Random(pick)
    chosen = {hier.nodes[rng.randrange(hier.num_labels)].name}
    layers = positives_per_layer(chosen, hier, closure=True)
    for m in range(1, hier.depth):
        for lid in layers[m]:
            parent = hier.nodes[lid].parent
            assert parent in layers[m - 1]
