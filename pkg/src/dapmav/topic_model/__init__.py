"""Nested stochastic block model topic modelling on document-word networks."""

from .dl import PartitionError, description_length, validate_levels
from .fit import FitConfig, fit_nested_partition
from .graph import DOC, WORD, BipartiteGraph, build_bipartite_graph
from .partition import (
    NestedPartition,
    doc_topic_counts,
    document_topic_mixture,
    token_topics,
    topic_densities,
    topic_word_distribution,
)
from .state import NestedState

__all__ = [
    "BipartiteGraph", "build_bipartite_graph", "WORD", "DOC",
    "description_length", "validate_levels", "PartitionError",
    "NestedState", "FitConfig", "fit_nested_partition",
    "NestedPartition", "topic_word_distribution", "topic_densities",
    "doc_topic_counts", "document_topic_mixture", "token_topics",
]
