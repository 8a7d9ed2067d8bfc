"""Inductive knowledge-graph completion over shared opening subgraphs with
local and global anchor features."""
from .estimator import GLAR
from .global_anchor import GlobalAnchorFeaturizer, KMeans
from .kg import (AugmentedGraph, DatasetSplit, KnowledgeGraph, augment_with_inverses, degree,
                 load_split)
from .local_anchor import LocalAnchorFeaturizer
from .subgraph import OpeningSubgraph, extract_opening_subgraph, membership

__version__ = "0.1.0"

__all__ = [
    "GLAR", "GlobalAnchorFeaturizer", "KMeans", "LocalAnchorFeaturizer", "AugmentedGraph", "DatasetSplit",
    "KnowledgeGraph", "OpeningSubgraph", "augment_with_inverses", "degree", "extract_opening_subgraph",
    "load_split", "membership",
]
