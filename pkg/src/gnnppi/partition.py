"""Train/test partitioning of PPI edges: Random, BFS and DFS testset construction.

BFS/DFS follow the root-then-search procedure: pick a low-degree root, walk
the graph in search order and move every edge incident to a visited protein
into the testset until it holds at least N edges.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .data import PpiGraph


class Scheme(str, Enum):
    RANDOM = "random"
    BFS = "bfs"
    DFS = "dfs"

    @classmethod
    def parse(cls, value: "str | Scheme") -> "Scheme":
        if isinstance(value, Scheme):
            return value
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"unknown partition scheme {value!r}; choose random, bfs or dfs") from None


class Stratum(str, Enum):
    BS = "BS"
    ES = "ES"
    NS = "NS"


STRATA = (Stratum.BS, Stratum.ES, Stratum.NS)


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionConfig:
    scheme: Scheme = Scheme.BFS
    test_fraction: float = 0.2
    root_degree_threshold: int = 5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.root_degree_threshold < 1:
            raise ValueError("root degree threshold t must be >= 1")

    def test_size(self, edge_count: int) -> int:
        n_test = math.floor(self.test_fraction * edge_count + 0.5)
        if n_test < 1:
            raise PartitionError(
                f"test_fraction {self.test_fraction} selects no edges out of {edge_count}"
            )
        return n_test


@dataclass(frozen=True)
class PartitionResult:
    n: int
    edges: tuple[tuple[int, int], ...]
    train_edges: tuple[int, ...]
    test_edges: tuple[int, ...]
    seen: frozenset[int]
    unseen: frozenset[int]
    strata: dict[int, Stratum]
    scheme: Scheme = Scheme.RANDOM
    roots: tuple[int, ...] = ()
    config: PartitionConfig | None = field(default=None, compare=False)

    @classmethod
    def from_test_edges(cls, graph: PpiGraph, test_edges, scheme=Scheme.RANDOM, roots=(), config=None):
        test = set(int(k) for k in test_edges)
        train = tuple(k for k in range(graph.edge_count) if k not in test)
        seen = set()
        for k in train:
            seen.update(graph.edges[k])
        unseen = frozenset(range(graph.n)) - seen
        strata = {}
        for k in sorted(test):
            a, b = graph.edges[k]
            hits = (a in seen) + (b in seen)
            strata[k] = (Stratum.NS, Stratum.ES, Stratum.BS)[hits]
        return cls(
            n=graph.n,
            edges=graph.edges,
            train_edges=train,
            test_edges=tuple(sorted(test)),
            seen=frozenset(seen),
            unseen=unseen,
            strata=strata,
            scheme=Scheme.parse(scheme),
            roots=tuple(roots),
            config=config,
        )

    def to_manifest(self, protein_ids=None) -> dict:
        cfg = self.config
        ids = (lambda i: protein_ids[i]) if protein_ids is not None else (lambda i: i)
        strata = {s.value: [k for k in self.test_edges if self.strata[k] is s] for s in STRATA}
        return {
            "scheme": self.scheme.value,
            "seed": cfg.seed if cfg else None,
            "t": cfg.root_degree_threshold if cfg else None,
            "test_fraction": cfg.test_fraction if cfg else None,
            "root_ids": [ids(r) for r in self.roots],
            "test_edge_ids": list(self.test_edges),
            "strata": strata,
        }

    @classmethod
    def from_manifest(cls, graph: PpiGraph, manifest: dict) -> "PartitionResult":
        test = manifest["test_edge_ids"]
        if any(not 0 <= k < graph.edge_count for k in test):
            raise PartitionError("manifest references edges outside the dataset")
        cfg = None
        if manifest.get("t") is not None:
            cfg = PartitionConfig(
                manifest["scheme"], manifest["test_fraction"], manifest["t"], manifest["seed"]
            )
        result = cls.from_test_edges(graph, test, manifest["scheme"], config=cfg)
        recorded = manifest.get("strata")
        if recorded is not None:
            for s in STRATA:
                mine = sorted(k for k in result.test_edges if result.strata[k] is s)
                if sorted(recorded.get(s.value, [])) != mine:
                    raise PartitionError(f"manifest strata {s.value} inconsistent with dataset")
        return result


def eligible_roots(graph: PpiGraph, t: int, exclude=()) -> list[int]:
    return [p for p in range(graph.n) if 1 <= graph.degree(p) < t and p not in exclude]


def select_root(graph: PpiGraph, t: int, rng: np.random.Generator, exclude=()) -> int:
    """Uniform draw among proteins with 1 <= degree < t."""
    cands = eligible_roots(graph, t, exclude)
    if not cands:
        raise PartitionError(f"no protein with 1 <= degree < {t}; raise the root degree threshold t")
    return cands[int(rng.integers(len(cands)))]


class SearchState:
    """Incremental BFS/DFS walk from a root; `search_next` yields the next protein."""

    def __init__(self, graph: PpiGraph, root: int, scheme: Scheme, visited: set[int] | None = None):
        self.graph = graph
        self.scheme = Scheme.parse(scheme)
        if self.scheme is Scheme.RANDOM:
            raise ValueError("search order must be BFS or DFS")
        self.visited = visited if visited is not None else set()
        self.current = root
        self.visited.add(root)
        if self.scheme is Scheme.BFS:
            self.discovered = set(self.visited)
            self.queue = deque()
            self._discover(root)
        else:
            # stack of (node, position in its sorted neighbor list)
            self.stack = [[root, 0]]

    def _discover(self, p: int):
        for v, _ in self.graph.adjacency[p]:
            if v not in self.discovered:
                self.discovered.add(v)
                self.queue.append(v)

    def next(self) -> int | None:
        if self.scheme is Scheme.BFS:
            while self.queue:
                v = self.queue.popleft()
                if v in self.visited:
                    continue
                self.visited.add(v)
                self._discover(v)
                self.current = v
                return v
            return None
        while self.stack:
            frame = self.stack[-1]
            adj = self.graph.adjacency[frame[0]]
            while frame[1] < len(adj) and adj[frame[1]][0] in self.visited:
                frame[1] += 1
            if frame[1] == len(adj):
                self.stack.pop()
                continue
            v = adj[frame[1]][0]
            self.visited.add(v)
            self.stack.append([v, 0])
            self.current = v
            return v
        return None


def search_next(graph: PpiGraph, state: SearchState, scheme=None) -> int | None:
    if scheme is not None and Scheme.parse(scheme) is not state.scheme:
        raise ValueError("scheme does not match the search state")
    return state.next()


def _search_partition(graph: PpiGraph, config: PartitionConfig, rng, n_test: int):
    test: set[int] = set()
    visited: set[int] = set()
    roots = []
    while True:
        exclude = visited
        cands = eligible_roots(graph, config.root_degree_threshold, exclude)
        if not cands and roots:
            # remaining components have no low-degree entry point
            cands = [p for p in range(graph.n) if graph.degree(p) >= 1 and p not in visited]
        if not cands:
            if not roots:
                raise PartitionError(
                    f"no protein with 1 <= degree < {config.root_degree_threshold}; "
                    "raise the root degree threshold t"
                )
            raise PartitionError(
                f"testset size {n_test} unreachable: all components exhausted at {len(test)} edges"
            )
        root = cands[int(rng.integers(len(cands)))]
        roots.append(root)
        state = SearchState(graph, root, config.scheme, visited)
        p = root
        while p is not None:
            test.update(k for _, k in graph.adjacency[p])
            if len(test) >= n_test:
                return test, roots
            p = state.next()


def make_partition(graph: PpiGraph, config: PartitionConfig, rng: np.random.Generator | None = None) -> PartitionResult:
    """Split ``graph.edges`` into train/test per ``config``.

    When ``rng`` is omitted a generator seeded from ``config.seed`` is used.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    m = graph.edge_count
    if m == 0:
        raise PartitionError("graph has no edges")
    n_test = config.test_size(m)
    if n_test >= m:
        raise PartitionError(f"testset of {n_test} edges leaves an empty trainset")
    if config.scheme is Scheme.RANDOM:
        test = rng.choice(m, size=n_test, replace=False).tolist()
        roots = []
    else:
        test, roots = _search_partition(graph, config, rng, n_test)
        if len(test) >= m:
            raise PartitionError("search consumed every edge; the trainset would be empty")
    return PartitionResult.from_test_edges(graph, test, config.scheme, roots, config)


def stratify(result: PartitionResult) -> dict:
    """Group test edges by stratum; proportions sum to 1 over the testset."""
    if not result.test_edges:
        raise PartitionError("empty testset")
    groups = {s: [k for k in result.test_edges if result.strata[k] is s] for s in STRATA}
    total = len(result.test_edges)
    return {
        "edges": groups,
        "proportions": {s: len(groups[s]) / total for s in STRATA},
    }


def protein_proportions(result: PartitionResult) -> dict[str, float]:
    """Fractions of non-isolated proteins touched only by train, only by test, or both."""
    in_train = set()
    for k in result.train_edges:
        in_train.update(result.edges[k])
    in_test = set()
    for k in result.test_edges:
        in_test.update(result.edges[k])
    touched = in_train | in_test
    if not touched:
        return {"trainset_only": 0.0, "testset_only": 0.0, "both": 0.0}
    total = len(touched)
    return {
        "trainset_only": len(in_train - in_test) / total,
        "testset_only": len(in_test - in_train) / total,
        "both": len(in_train & in_test) / total,
    }
