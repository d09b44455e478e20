"""Feature propagation over the augmented label graph and template injection.

Propagation is degree-normalized mean aggregation over the self-inclusive
neighborhood, applied K times with a per-step weight matrix:

    g_u <- ReLU( (1 / (|N(u)| + 1)) * W @ sum_{v in N(u) + {u}} g_v )

The output for each virtual layer node is added residually to the
corresponding template embedding.
"""

from __future__ import annotations

import torch
from torch import Tensor, nn

from .errors import DimensionMismatch, MissingVirtualNode
from .hierarchy import AugmentedGraph


def normalized_adjacency(graph: AugmentedGraph) -> Tensor:
    """Dense D^-1 (A + I) matrix for the augmented graph."""
    n = graph.num_nodes
    a = torch.eye(n, dtype=torch.float64)
    for u, neighbors in enumerate(graph.adjacency()):
        for v in neighbors:
            a[u, v] = 1.0
    return a / a.sum(dim=1, keepdim=True)


class StructureEncoder(nn.Module):
    """K stacked propagation layers over a fixed augmented graph."""

    def __init__(self, graph: AugmentedGraph, dim: int, num_layers: int = 1):
        super().__init__()
        if num_layers < 1:
            raise DimensionMismatch("need at least one propagation layer")
        self.graph = graph
        self.dim = dim
        self.weights = nn.ParameterList(
            nn.Parameter(torch.empty(dim, dim)) for _ in range(num_layers)
        )
        for w in self.weights:
            nn.init.xavier_uniform_(w)
        self.register_buffer(
            "adj_norm", normalized_adjacency(graph).to(torch.get_default_dtype())
        )

    def propagate(self, feats: Tensor) -> Tensor:
        """Run all propagation layers over node features (num_nodes, dim)."""
        if feats.shape != (self.graph.num_nodes, self.dim):
            raise DimensionMismatch(
                f"expected features of shape {(self.graph.num_nodes, self.dim)}, "
                f"got {tuple(feats.shape)}"
            )
        g = feats
        for w in self.weights:
            g = torch.relu(self.adj_norm.to(g.dtype) @ g @ w.t().to(g.dtype))
        return g

    def forward(self, feats: Tensor) -> Tensor:
        return self.propagate(feats)


def inject_templates(templates: Tensor, propagated: Tensor, num_labels: int) -> Tensor:
    """Residual injection: t'_i = t_i + g_{t_i}.

    Args:
        templates: (L, d) template embeddings.
        propagated: (num_labels + L, d) propagated node features.
        num_labels: number of label nodes preceding the virtual nodes.
    Returns:
        (L, d) injected template embeddings.
    """
    L = templates.shape[0]
    if propagated.shape[0] < num_labels + L:
        raise MissingVirtualNode(
            f"propagated features have {propagated.shape[0]} rows, "
            f"need {num_labels + L}"
        )
    return templates + propagated[num_labels : num_labels + L]
