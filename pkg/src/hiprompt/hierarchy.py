"""Label taxonomy: loading, validation, depth layers and the augmented graph.

The taxonomy is a tree rooted at an implicit ``Root`` node. The root is
excluded from the label set, so the children of the root sit at depth 1.
Labels at the same depth form a layer; layers partition the label set.

For hierarchy injection the tree is augmented with one virtual node per
layer. Three connection schemes are supported:

* ``same-depth``     -- virtual node i is adjacent to exactly the labels of depth i
* ``depth-increasing`` -- virtual node i is adjacent to the labels of depth <= i
* ``random``         -- same-depth edges plus one extra edge per label to a
  uniformly chosen virtual node, reproducible from a seed
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import (
    CycleDetected,
    Disconnected,
    MultipleParents,
    UnknownLabel,
    UnknownScheme,
)

ROOT_NAME = "Root"

CONNECTION_SCHEMES = ("same-depth", "depth-increasing", "random")


@dataclass(frozen=True)
class LabelNode:
    id: int
    name: str
    parent: Optional[int]  # None for children of the implicit root
    depth: int  # >= 1


@dataclass(frozen=True)
class LabelHierarchy:
    """Validated taxonomy with per-depth layers.

    ``layers[m]`` holds the ids of labels at depth m+1 (list index 0 is
    depth 1). ``depth`` is the maximum depth L.
    """

    nodes: tuple[LabelNode, ...]
    layers: tuple[frozenset[int], ...]
    name_to_id: dict[str, int] = field(repr=False)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def num_labels(self) -> int:
        return len(self.nodes)

    def id_of(self, name: str) -> int:
        try:
            return self.name_to_id[name]
        except KeyError:
            raise UnknownLabel(f"unknown label: {name!r}") from None

    def layer_of(self, label_id: int) -> int:
        """1-based depth of a label."""
        return self.nodes[label_id].depth

    def layer_ids(self, m: int) -> list[int]:
        """Sorted label ids of layer m (1-based)."""
        return sorted(self.layers[m - 1])

    def ancestors(self, label_id: int) -> list[int]:
        """Ids on the path from the label's parent up to depth 1."""
        out = []
        parent = self.nodes[label_id].parent
        while parent is not None:
            out.append(parent)
            parent = self.nodes[parent].parent
        return out

    def edges(self) -> list[tuple[int, int]]:
        """Parent-child id pairs of the label tree (root edges excluded)."""
        return [
            (node.parent, node.id) for node in self.nodes if node.parent is not None
        ]


@dataclass(frozen=True)
class AugmentedGraph:
    """Label tree plus L virtual layer nodes.

    Node ids 0..num_labels-1 are labels; ids num_labels..num_labels+L-1 are
    the virtual nodes t_1..t_L (virtual node for layer i has id
    num_labels + i - 1).
    """

    num_labels: int
    num_layers: int
    label_edges: tuple[tuple[int, int], ...]
    virtual_edges: tuple[tuple[int, int], ...]  # (virtual node id, label id)
    scheme: str
    seed: Optional[int] = None

    @property
    def num_nodes(self) -> int:
        return self.num_labels + self.num_layers

    def virtual_id(self, layer: int) -> int:
        """Graph node id of virtual node t_layer (1-based layer)."""
        return self.num_labels + layer - 1

    def adjacency(self) -> list[set[int]]:
        """Undirected neighbor sets indexed by node id (no self loops)."""
        adj: list[set[int]] = [set() for _ in range(self.num_nodes)]
        for u, v in list(self.label_edges) + list(self.virtual_edges):
            adj[u].add(v)
            adj[v].add(u)
        return adj


def load_taxonomy(edge_records: Sequence[tuple[str, str]]) -> LabelHierarchy:
    """Build a validated hierarchy from (parent-name, child-name) pairs.

    Label ids are assigned by first appearance (as child, then parent)
    so the same record order always yields the same ids.
    """
    if not edge_records:
        raise Disconnected("empty taxonomy: no edge records")

    parent_of: dict[str, str] = {}
    order: list[str] = []
    for parent, child in edge_records:
        if not parent or not child:
            raise UnknownLabel(f"empty name in record ({parent!r}, {child!r})")
        if child == ROOT_NAME:
            raise CycleDetected(f"{ROOT_NAME!r} appears as a child")
        if child in parent_of:
            if parent_of[child] != parent:
                raise MultipleParents(
                    f"label {child!r} has parents {parent_of[child]!r} and {parent!r}"
                )
            continue
        parent_of[child] = parent
        order.append(child)

    if not any(p == ROOT_NAME for p in parent_of.values()):
        raise Disconnected(f"no edge from the root name {ROOT_NAME!r}")

    # Walk each label's parent chain to the root, catching cycles and
    # labels that hang off undeclared parents.
    depths: dict[str, int] = {}

    def resolve_depth(name: str) -> int:
        chain = []
        seen = set()
        cur = name
        while cur not in depths:
            if cur in seen:
                raise CycleDetected(f"cycle through label {cur!r}")
            seen.add(cur)
            parent = parent_of[cur]
            chain.append(cur)
            if parent == ROOT_NAME:
                depths[cur] = 1
                break
            if parent not in parent_of:
                raise Disconnected(f"label {name!r} hangs off undeclared {parent!r}")
            cur = parent
        for node in reversed(chain):
            if node not in depths:
                depths[node] = depths[parent_of[node]] + 1
        return depths[name]

    for name in order:
        resolve_depth(name)

    name_to_id = {name: i for i, name in enumerate(order)}
    nodes = tuple(
        LabelNode(
            id=i,
            name=name,
            parent=None if parent_of[name] == ROOT_NAME else name_to_id[parent_of[name]],
            depth=depths[name],
        )
        for i, name in enumerate(order)
    )
    max_depth = max(depths.values())
    layers = tuple(
        frozenset(n.id for n in nodes if n.depth == d) for d in range(1, max_depth + 1)
    )
    return LabelHierarchy(nodes=nodes, layers=layers, name_to_id=name_to_id)


def read_taxonomy_file(path: str | Path) -> list[tuple[str, str]]:
    """Parse a taxonomy file: one `parent<TAB>child` edge per line, UTF-8.

    Lines starting with ``#`` and blank lines are skipped.
    """
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise UnknownLabel(f"{path}:{lineno}: expected `parent<TAB>child`, got {line!r}")
        records.append((parts[0], parts[1]))
    return records


def build_augmented_graph(
    hier: LabelHierarchy, scheme: str = "same-depth", seed: Optional[int] = None
) -> AugmentedGraph:
    """Attach L virtual layer nodes to the label tree under a scheme."""
    if scheme not in CONNECTION_SCHEMES:
        raise UnknownScheme(f"unknown connection scheme: {scheme!r}")
    if scheme == "random" and seed is None:
        raise UnknownScheme("random scheme requires a seed")

    num_labels = hier.num_labels
    L = hier.depth
    virtual_edges: list[tuple[int, int]] = []

    for layer in range(1, L + 1):
        t = num_labels + layer - 1
        if scheme == "depth-increasing":
            members: Iterable[int] = (
                lid for m in range(1, layer + 1) for lid in hier.layer_ids(m)
            )
        else:
            members = hier.layer_ids(layer)
        virtual_edges.extend((t, lid) for lid in members)

    if scheme == "random":
        # Dedicated generator so the ablation's randomness is isolated.
        rng = random.Random(seed)
        for lid in range(num_labels):
            layer = rng.randrange(1, L + 1)
            virtual_edges.append((num_labels + layer - 1, lid))

    return AugmentedGraph(
        num_labels=num_labels,
        num_layers=L,
        label_edges=tuple(hier.edges()),
        virtual_edges=tuple(virtual_edges),
        scheme=scheme,
        seed=seed if scheme == "random" else None,
    )


def positives_per_layer(
    labels: Iterable[str], hier: LabelHierarchy, closure: bool = True
) -> list[set[int]]:
    """Per-layer positive label id sets for an instance's label names.

    With ``closure`` every ancestor of a given label is also positive, so
    the positives trace full root-to-label paths.
    """
    ids = set()
    for name in labels:
        lid = hier.id_of(name)
        ids.add(lid)
        if closure:
            ids.update(hier.ancestors(lid))
    return [ids & set(hier.layers[m]) for m in range(hier.depth)]
