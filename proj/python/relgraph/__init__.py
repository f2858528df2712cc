"""Relation-aware heterogeneous graph representation learning."""

from relgraph._core import (
    Graph,
    Model,
    accuracy,
    ari,
    clustering_score,
    generate,
    macro_f1,
    nmi,
)

__all__ = [
    "Graph",
    "Model",
    "accuracy",
    "ari",
    "clustering_score",
    "generate",
    "macro_f1",
    "nmi",
]
