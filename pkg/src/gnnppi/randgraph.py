"""Erdos-Renyi graphs and an empirical check that random edge splits leave
almost every test interaction between proteins already seen in training."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .data import PpiGraph
from .partition import PartitionConfig, Scheme, Stratum, make_partition, stratify


def connectivity_threshold(n: int) -> float:
    """M' = (n-1) ln(n) / 2; G(n, M) with M above it is almost surely connected."""
    if n < 2:
        raise ValueError("connectivity threshold needs n >= 2")
    return (n - 1) * math.log(n) / 2.0


def gen_gnp(n: int, p: float, rng: np.random.Generator) -> PpiGraph:
    if not 0.0 <= p <= 1.0:
        raise ValueError("edge probability must be in [0, 1]")
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return PpiGraph.from_pairs(n, list(zip(iu[keep].tolist(), ju[keep].tolist())))


def gen_gnm(n: int, m: int, rng: np.random.Generator) -> PpiGraph:
    """Uniform graph with exactly m edges, by rejecting repeated pairs.

    Expected cost grows sharply as m approaches n(n-1)/2.
    """
    total = n * (n - 1) // 2
    if m < 0 or m > total:
        raise ValueError(f"M={m} exceeds the {total} possible pairs for n={n}")
    chosen: set[tuple[int, int]] = set()
    order = []
    while len(chosen) < m:
        need = m - len(chosen)
        a = rng.integers(n, size=2 * need + 8)
        b = rng.integers(n, size=2 * need + 8)
        for u, v in zip(a.tolist(), b.tolist()):
            if u == v:
                continue
            key = (u, v) if u < v else (v, u)
            if key in chosen:
                continue
            chosen.add(key)
            order.append(key)
            if len(chosen) == m:
                break
    return PpiGraph.from_pairs(n, order)


def is_connected(graph: PpiGraph) -> bool:
    if graph.n <= 1:
        return True
    seen = np.zeros(graph.n, dtype=bool)
    seen[0] = True
    stack = [0]
    while stack:
        u = stack.pop()
        for v, _ in graph.adjacency[u]:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    return bool(seen.all())


@dataclass(frozen=True)
class ErConfig:
    n: int
    m: int | None = None
    p: float | None = None
    trials: int = 20
    seed: int = 0

    def __post_init__(self):
        if (self.m is None) == (self.p is None):
            raise ValueError("give exactly one of M (G(n,M)) or p (G(n,p))")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.m is not None and not 0 <= self.m <= self.n * (self.n - 1) // 2:
            raise ValueError("M exceeds n(n-1)/2")
        if self.p is not None and not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")


@dataclass
class TrialResult:
    bs: float
    es: float
    ns: float
    train_connected: bool
    rejections: int
    degree_one: int


@dataclass
class CorollaryReport:
    n: int
    m: int | None
    p: float | None
    test_fraction: float
    trials: list[TrialResult]
    bs_mean: float
    bs_std: float
    train_connectivity_rate: float
    threshold: float
    rejections: int

    def to_dict(self) -> dict:
        return asdict(self)


def _train_graph_connected(graph: PpiGraph, train_edges) -> bool:
    sub = PpiGraph.from_pairs(graph.n, [graph.edges[k] for k in train_edges])
    return is_connected(sub)


def _run_trial(config: ErConfig, test_fraction: float, seed_seq: np.random.SeedSequence, max_rejections: int):
    rng = np.random.default_rng(seed_seq)
    rejections = 0
    while True:
        if config.m is not None:
            graph = gen_gnm(config.n, config.m, rng)
        else:
            graph = gen_gnp(config.n, config.p, rng)
        if is_connected(graph):
            break
        rejections += 1
        if rejections > max_rejections:
            raise RuntimeError(
                f"no connected graph after {max_rejections} draws; increase M or p"
            )
    part_seed = int(rng.integers(2**31))
    result = make_partition(graph, PartitionConfig(Scheme.RANDOM, test_fraction, 1, part_seed))
    props = stratify(result)["proportions"]
    return TrialResult(
        bs=props[Stratum.BS],
        es=props[Stratum.ES],
        ns=props[Stratum.NS],
        train_connected=_train_graph_connected(graph, result.train_edges),
        rejections=rejections,
        degree_one=sum(1 for d in graph.degrees() if d == 1),
    )


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("PPI_BENCH_THREADS", "1")))
    except ValueError:
        return 1


def corollary_experiment(config: ErConfig, test_fraction: float = 0.2, max_rejections: int = 1000) -> CorollaryReport:
    """Random-partition connected ER graphs and record the test strata proportions.

    Each trial draws from its own child seed, so results do not depend on the
    number of worker threads.
    """
    if config.trials <= 0:
        raise ValueError("trials must be >= 1")
    children = np.random.SeedSequence(config.seed).spawn(config.trials)
    workers = min(worker_count(), config.trials)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            trials = list(pool.map(lambda s: _run_trial(config, test_fraction, s, max_rejections), children))
    else:
        trials = [_run_trial(config, test_fraction, s, max_rejections) for s in children]
    bs = np.array([t.bs for t in trials])
    return CorollaryReport(
        n=config.n,
        m=config.m,
        p=config.p,
        test_fraction=test_fraction,
        trials=trials,
        bs_mean=float(bs.mean()),
        bs_std=float(bs.std()),
        train_connectivity_rate=float(np.mean([t.train_connected for t in trials])),
        threshold=connectivity_threshold(config.n),
        rejections=sum(t.rejections for t in trials),
    )
