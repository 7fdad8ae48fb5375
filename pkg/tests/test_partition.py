import numpy as np
import pytest

from gnnppi.data import PpiGraph
from gnnppi.partition import (
    PartitionConfig,
    PartitionError,
    PartitionResult,
    Scheme,
    SearchState,
    Stratum,
    make_partition,
    protein_proportions,
    search_next,
    select_root,
    stratify,
)

A, B, C, D, E = range(5)
AB, BC, CD, DE, BD = range(5)


class FixedRoot:
    """Stands in for a Generator: always returns the index of a chosen protein among candidates."""

    def __init__(self, graph, t, root):
        from gnnppi.partition import eligible_roots

        self.pos = eligible_roots(graph, t).index(root)

    def integers(self, high):
        return self.pos


def oracle_partition(pairs, n, root, n_test, scheme):
    """Straight-line reimplementation: visit order first, then accumulate incident edges."""
    nbrs = {u: sorted({b for a, b in pairs if a == u} | {a for a, b in pairs if b == u}) for u in range(n)}
    order = []
    if scheme == "bfs":
        level = [root]
        seen = {root}
        while level:
            order.extend(level)
            nxt = []
            for u in level:
                for v in nbrs[u]:
                    if v not in seen:
                        seen.add(v)
                        nxt.append(v)
            level = nxt
    else:
        def rec(u):
            order.append(u)
            for v in nbrs[u]:
                if v not in order:
                    rec(v)
        rec(root)
    test = set()
    for u in order:
        test |= {k for k, (a, b) in enumerate(pairs) if u in (a, b)}
        if len(test) >= n_test:
            break
    return test


class TestSelectRoot:
    def test_star_leaves(self):
        star = PpiGraph.from_pairs(5, [(0, 1), (0, 2), (0, 3), (0, 4)])
        picks = {select_root(star, 2, np.random.default_rng(s)) for s in range(40)}
        assert picks == {1, 2, 3, 4}

    def test_path_brute_force(self):
        path = PpiGraph.from_pairs(3, [(0, 1), (1, 2)])
        eligible = {p for p in range(3) if 1 <= path.degree(p) < 2}
        assert eligible == {0, 2}
        for s in range(20):
            assert select_root(path, 2, np.random.default_rng(s)) in eligible

    def test_triangle_error(self):
        tri = PpiGraph.from_pairs(3, [(0, 1), (1, 2), (0, 2)])
        with pytest.raises(PartitionError, match="raise"):
            select_root(tri, 2, np.random.default_rng(0))

    def test_isolated_never_root(self):
        g = PpiGraph.from_pairs(4, [(0, 1)])
        for s in range(20):
            assert select_root(g, 5, np.random.default_rng(s)) in (0, 1)


def walk(graph, root, scheme):
    state = SearchState(graph, root, scheme)
    order = [root]
    while (p := search_next(graph, state, scheme)) is not None:
        order.append(p)
    return order


class TestSearchNext:
    def test_path_bfs(self):
        path = PpiGraph.from_pairs(4, [(0, 1), (1, 2), (2, 3)])
        assert walk(path, 0, "bfs") == [0, 1, 2, 3]

    def test_star_both_orders(self):
        star = PpiGraph.from_pairs(4, [(0, 1), (0, 2), (0, 3)])
        assert walk(star, 0, "bfs") == [0, 1, 2, 3]
        assert walk(star, 0, "dfs") == [0, 1, 2, 3]

    def test_dfs_goes_deep_before_wide(self):
        g = PpiGraph.from_pairs(5, [(0, 1), (0, 2), (1, 3), (3, 4)])
        assert walk(g, 0, "dfs") == [0, 1, 3, 4, 2]
        assert walk(g, 0, "bfs") == [0, 1, 2, 3, 4]

    def test_isolated_root(self):
        g = PpiGraph.from_pairs(2, [])
        state = SearchState(g, 0, "bfs")
        assert search_next(g, state) is None


class TestTraces:
    def test_bfs_trace(self, trace_graph):
        cfg = PartitionConfig("bfs", 0.4, 5, 0)
        res = make_partition(trace_graph, cfg, FixedRoot(trace_graph, 5, E))
        assert set(res.test_edges) == {DE, CD, BD}
        assert set(res.train_edges) == {AB, BC}
        assert res.seen == {A, B, C} and res.unseen == {D, E}
        assert res.strata == {DE: Stratum.NS, CD: Stratum.ES, BD: Stratum.ES}
        assert set(res.test_edges) == oracle_partition(list(trace_graph.edges), 5, E, 2, "bfs")
        assert res.roots == (E,)

    def test_dfs_trace(self):
        path = PpiGraph.from_pairs(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
        cfg = PartitionConfig("dfs", 0.4, 5, 0)
        res = make_partition(path, cfg, FixedRoot(path, 5, A))
        assert set(res.test_edges) == {0, 1}
        assert set(res.train_edges) == {2, 3}
        assert res.unseen == {A, B}
        assert res.strata == {0: Stratum.NS, 1: Stratum.ES}
        assert set(res.test_edges) == oracle_partition(list(path.edges), 5, A, 2, "dfs")

    def test_random_full_test_rejected(self, trace_graph):
        with pytest.raises(PartitionError, match="empty trainset"):
            make_partition(trace_graph, PartitionConfig("random", 0.95, 5, 0))


class TestStratify:
    def test_all_bs(self):
        g = PpiGraph.from_pairs(3, [(0, 1), (1, 2), (0, 2)])
        res = PartitionResult.from_test_edges(g, [2])
        out = stratify(res)
        assert out["proportions"][Stratum.BS] == 1.0

    def test_bfs_trace_proportions(self, trace_graph):
        res = make_partition(trace_graph, PartitionConfig("bfs", 0.4, 5, 0), FixedRoot(trace_graph, 5, E))
        props = stratify(res)["proportions"]
        assert props[Stratum.BS] == 0.0
        assert props[Stratum.ES] == pytest.approx(2 / 3)
        assert props[Stratum.NS] == pytest.approx(1 / 3)

    def test_empty_testset(self, trace_graph):
        res = PartitionResult.from_test_edges(trace_graph, [])
        with pytest.raises(PartitionError, match="empty testset"):
            stratify(res)


class TestProteinProportions:
    def test_bfs_trace(self, trace_graph):
        res = make_partition(trace_graph, PartitionConfig("bfs", 0.4, 5, 0), FixedRoot(trace_graph, 5, E))
        # train edges {AB, BC}, test edges {CD, DE, BD}: A train-only; D, E test-only; B, C both
        assert protein_proportions(res) == pytest.approx({"trainset_only": 0.2, "testset_only": 0.4, "both": 0.4})

    def test_all_train(self, trace_graph):
        res = PartitionResult.from_test_edges(trace_graph, [])
        assert protein_proportions(res) == {"trainset_only": 1.0, "testset_only": 0.0, "both": 0.0}

    def test_split_by_component(self):
        g = PpiGraph.from_pairs(4, [(0, 1), (2, 3)])
        res = PartitionResult.from_test_edges(g, [1])
        assert protein_proportions(res)["both"] == 0.0


class TestComponents:
    def test_reseeds_on_exhausted_component(self):
        # two paths; the first alone cannot supply N edges
        g = PpiGraph.from_pairs(7, [(0, 1), (2, 3), (3, 4), (4, 5), (5, 6)])
        cfg = PartitionConfig("bfs", 0.6, 2, 0)
        res = make_partition(g, cfg, FixedRoot(g, 2, 0))
        assert len(res.test_edges) >= 3
        assert len(res.roots) == 2
        assert all(res.strata[k] is not Stratum.BS for k in res.test_edges)

    def test_unreachable_n(self):
        # every component is a single edge; a 2-edge testset leaves the trainset empty
        g = PpiGraph.from_pairs(4, [(0, 1), (2, 3)])
        with pytest.raises(PartitionError):
            make_partition(g, PartitionConfig("dfs", 0.9, 5, 0))


def test_manifest_roundtrip(trace_graph):
    res = make_partition(trace_graph, PartitionConfig("bfs", 0.4, 5, 3))
    man = res.to_manifest()
    again = PartitionResult.from_manifest(trace_graph, man)
    assert again.test_edges == res.test_edges and again.strata == res.strata
    man["strata"]["BS"] = [0]
    with pytest.raises(PartitionError):
        PartitionResult.from_manifest(trace_graph, man)


def test_scheme_parse():
    assert Scheme.parse("BFS") is Scheme.BFS
    with pytest.raises(ValueError):
        Scheme.parse("spiral")
