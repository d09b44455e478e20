"""Hierarchy-aware prompt tuning toolkit for hierarchical text
classification."""

__version__ = "0.1.0"

from .data import Example, SyntheticSpec, generate_synthetic, load_corpus  # noqa: F401
from .hierarchy import (  # noqa: F401
    LabelHierarchy,
    build_augmented_graph,
    load_taxonomy,
    positives_per_layer,
    read_taxonomy_file,
)
from .losses import bce_loss, layerwise_total, mlce_reference, mlm_masking, zmlce  # noqa: F401
from .model import HtcModel, ModelConfig  # noqa: F401
from .pipeline import (  # noqa: F401
    RunConfig,
    RunMetrics,
    decode,
    low_resource_run,
    nearest_words,
    train,
)
