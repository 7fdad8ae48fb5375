"""Synthetic PPI data whose labels depend on hidden protein communities.

Edges are mostly intra-community, so a protein's neighbors reveal its
community. Sequences carry only a faint community bias in residue usage.
"""

from __future__ import annotations

import numpy as np

from .data import NUM_LABELS, Dataset, Edge, InteractionTable, ProteinTable
from .features import STANDARD_RESIDUES


def community_label_masks(k: int, rng: np.random.Generator) -> dict[tuple[int, int], int]:
    masks: dict[tuple[int, int], int] = {}
    used = set()
    for a in range(k):
        for b in range(a, k):
            while True:
                m = int(rng.integers(1, 2**NUM_LABELS))
                if m not in used:
                    used.add(m)
                    masks[(a, b)] = m
                    break
    return masks


def make_toy_dataset(
    n: int = 50,
    m: int = 200,
    communities: int = 4,
    p_intra: float = 0.85,
    seq_len: tuple[int, int] = (40, 80),
    seq_bias: float = 0.3,
    seed: int = 0,
) -> tuple[Dataset, np.ndarray]:
    """Returns the dataset and each protein's community."""
    rng = np.random.default_rng(seed)
    comm = rng.permutation(np.arange(n) % communities)
    # heterogeneous endpoint weights give a spread of degrees, incl. low-degree roots
    weight = rng.pareto(2.0, size=n) + 0.3
    members = [np.flatnonzero(comm == c) for c in range(communities)]
    masks = community_label_masks(communities, rng)
    pairs: dict[tuple[int, int], int] = {}
    cap = n * (n - 1) // 2
    if m > cap:
        raise ValueError("too many edges requested")
    while len(pairs) < m:
        a = int(rng.choice(n, p=weight / weight.sum()))
        if rng.random() < p_intra:
            pool = members[comm[a]]
        else:
            pool = np.flatnonzero(comm != comm[a])
        w = weight[pool]
        b = int(pool[rng.choice(pool.size, p=w / w.sum())])
        if a == b:
            continue
        key = (min(a, b), max(a, b))
        if key in pairs:
            continue
        ca, cb = sorted((int(comm[a]), int(comm[b])))
        pairs[key] = masks[(ca, cb)]
    ids = tuple(f"P{i:03d}" for i in range(n))
    alphabet = np.array(list(STANDARD_RESIDUES))
    # each community over-uses a few residues with total extra mass seq_bias
    favored = [rng.choice(alphabet.size, size=4, replace=False) for _ in range(communities)]
    seqs = {}
    for i, pid in enumerate(ids):
        probs = np.full(alphabet.size, (1.0 - seq_bias) / alphabet.size)
        probs[favored[comm[i]]] += seq_bias / 4
        length = int(rng.integers(seq_len[0], seq_len[1] + 1))
        seqs[pid] = "".join(rng.choice(alphabet, size=length, p=probs))
    edges = tuple(Edge(a, b, mask) for (a, b), mask in pairs.items())
    return Dataset(ProteinTable(ids, seqs), InteractionTable(edges)), comm
