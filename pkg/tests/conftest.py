import pytest
import torch

from hiprompt.hierarchy import load_taxonomy

SEVEN_NODE_RECORDS = [
    ("Root", "A"),
    ("Root", "B"),
    ("A", "A1"),
    ("A", "A2"),
    ("B", "B1"),
    ("B", "B2"),
]


@pytest.fixture
def seven_node_hier():
    return load_taxonomy(SEVEN_NODE_RECORDS)


@pytest.fixture
def double_precision():
    """Run a test at float64 for finite-difference comparisons."""
    prev = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(prev)
