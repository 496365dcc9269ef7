from .hierarchy import (
    CommunityRecord,
    CoOccurrenceGraph,
    build_cooccurrence_graph,
    cluster_once,
    leaves,
    leiden_cluster,
)
from .kernels import BACKEND
from .leiden import CSRGraph, best_of_restarts, leiden, modularity

__all__ = [
    "BACKEND",
    "CSRGraph",
    "CommunityRecord",
    "CoOccurrenceGraph",
    "build_cooccurrence_graph",
    "cluster_once",
    "leaves",
    "best_of_restarts",
    "leiden",
    "leiden_cluster",
    "modularity",
]
