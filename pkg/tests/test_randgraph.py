import math

import numpy as np
import pytest

from gnnppi.data import PpiGraph
from gnnppi.partition import PartitionConfig, Stratum, make_partition, stratify
from gnnppi.randgraph import (
    ErConfig,
    connectivity_threshold,
    corollary_experiment,
    gen_gnm,
    gen_gnp,
    is_connected,
)


def union_find_connected(n, pairs):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in pairs:
        parent[find(a)] = find(b)
    return len({find(i) for i in range(n)}) == 1


class TestThreshold:
    @pytest.mark.parametrize("n, expected", [(1690, 6276.7), (5189, 22189.8), (15335, 73893.7)])
    def test_reported_values(self, n, expected):
        assert abs(connectivity_threshold(n) - expected) <= 0.5

    def test_n2(self):
        assert connectivity_threshold(2) == pytest.approx(math.log(2) / 2)
        assert connectivity_threshold(2) == pytest.approx(0.3466, abs=1e-4)

    def test_small_n(self):
        with pytest.raises(ValueError):
            connectivity_threshold(1)

    def test_monotone(self):
        vals = [connectivity_threshold(n) for n in range(2, 500)]
        assert all(b > a for a, b in zip(vals, vals[1:]))


class TestGenerators:
    def test_gnp_extremes(self):
        rng = np.random.default_rng(0)
        assert gen_gnp(10, 0.0, rng).edge_count == 0
        assert gen_gnp(10, 1.0, rng).edge_count == 45

    def test_gnm_triangle(self):
        g = gen_gnm(3, 3, np.random.default_rng(0))
        assert sorted(g.edges) == [(0, 1), (0, 2), (1, 2)]
        assert is_connected(g)

    def test_gnm_exact_and_distinct(self):
        for seed in range(20):
            g = gen_gnm(30, 100, np.random.default_rng(seed))
            assert g.edge_count == 100 == len(set(g.edges))

    def test_gnm_too_many(self):
        with pytest.raises(ValueError):
            gen_gnm(4, 7, np.random.default_rng(0))

    def test_gnp_edge_count_within_4_sigma(self):
        n, p = 60, 0.1
        pairs = n * (n - 1) // 2
        mu, sigma = pairs * p, math.sqrt(pairs * p * (1 - p))
        for seed in range(30):
            m = gen_gnp(n, p, np.random.default_rng(seed)).edge_count
            assert abs(m - mu) <= 4 * sigma


class TestConnectivity:
    def test_path_and_disjoint(self):
        assert is_connected(PpiGraph.from_pairs(4, [(0, 1), (1, 2), (2, 3)]))
        assert not is_connected(PpiGraph.from_pairs(4, [(0, 1), (2, 3)]))
        assert not is_connected(PpiGraph.from_pairs(3, [(0, 1)]))

    def test_against_union_find(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            n = int(rng.integers(2, 15))
            m = int(rng.integers(0, n * (n - 1) // 2 + 1))
            g = gen_gnm(n, m, rng)
            assert is_connected(g) == union_find_connected(n, g.edges)

    def test_above_threshold_mostly_connected(self):
        m = round(2 * connectivity_threshold(1000))
        rng = np.random.default_rng(7)
        hits = sum(is_connected(gen_gnm(1000, m, rng)) for _ in range(100))
        assert hits >= 95


class TestCorollary:
    def test_zero_trials(self):
        with pytest.raises(ValueError):
            corollary_experiment(ErConfig(n=50, m=200, trials=0))

    def test_tiny_fraction_all_bs(self):
        rep = corollary_experiment(ErConfig(n=100, m=600, trials=5, seed=2), test_fraction=1 / 600)
        assert all(t.bs == 1.0 for t in rep.trials)
        assert rep.bs_mean == 1.0

    def test_report_proportions(self):
        rep = corollary_experiment(ErConfig(n=200, m=1200, trials=4, seed=0))
        for t in rep.trials:
            assert t.bs + t.es + t.ns == pytest.approx(1.0)
            assert 0 <= t.bs <= 1
        assert rep.threshold == pytest.approx(connectivity_threshold(200))

    def test_deterministic_and_thread_independent(self, monkeypatch):
        cfg = ErConfig(n=120, m=700, trials=6, seed=11)
        one = corollary_experiment(cfg).to_dict()
        monkeypatch.setenv("PPI_BENCH_THREADS", "3")
        assert corollary_experiment(cfg).to_dict() == one

    def test_star_is_es_heavy(self):
        # oracle: every tested leaf loses its only edge, the hub keeps train edges
        star = PpiGraph.from_pairs(50, [(0, i) for i in range(1, 50)])
        res = make_partition(star, PartitionConfig("random", 0.2, 5, 0))
        props = stratify(res)["proportions"]
        expected_es = sum(1 for k in res.test_edges if (0 in res.seen)) / len(res.test_edges)
        assert props[Stratum.ES] == expected_es == 1.0
        assert props[Stratum.BS] == 0.0

    def test_gnp_variant(self):
        rep = corollary_experiment(ErConfig(n=80, p=0.2, trials=3, seed=1))
        assert len(rep.trials) == 3 and rep.m is None
