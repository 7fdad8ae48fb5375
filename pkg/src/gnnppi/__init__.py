"""Graph-aware PPI benchmark: BFS/DFS partitions, stratified evaluation and a GIN classifier."""

__version__ = "0.1.0"
