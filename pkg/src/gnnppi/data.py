"""Interaction/sequence ingestion and the PPI graph.

Proteins get dense indices in first-appearance order. Interactions are stored
once per unordered pair with a 7-bit label mask; duplicate rows are merged by
label union.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO

logger = logging.getLogger(__name__)

LABELS: tuple[str, ...] = (
    "reaction",
    "binding",
    "ptmod",
    "activation",
    "inhibition",
    "catalysis",
    "expression",
)
NUM_LABELS = len(LABELS)
LABEL_INDEX = {name: i for i, name in enumerate(LABELS)}

# 20 standard residues plus U, O, X; any other letter folds to X.
KNOWN_RESIDUES = frozenset("ACDEFGHIKLMNPQRSTVWYUOX")


class ParseError(ValueError):
    """Malformed input file. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class GraphError(ValueError):
    pass


def labels_to_mask(names: Iterable[str]) -> int:
    mask = 0
    for name in names:
        key = name.strip().lower()
        if key not in LABEL_INDEX:
            raise KeyError(name)
        mask |= 1 << LABEL_INDEX[key]
    return mask


def mask_to_labels(mask: int) -> list[str]:
    return [LABELS[i] for i in range(NUM_LABELS) if mask >> i & 1]


def mask_to_bits(mask: int) -> list[int]:
    return [mask >> i & 1 for i in range(NUM_LABELS)]


@dataclass(frozen=True)
class ProteinTable:
    """Protein ids with dense indices 0..n-1 and optional sequences."""

    ids: tuple[str, ...]
    sequences: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate protein ids")
        object.__setattr__(self, "_index", {pid: i for i, pid in enumerate(self.ids)})

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, pid: str) -> bool:
        return pid in self._index

    def index(self, pid: str) -> int:
        return self._index[pid]

    def sequence(self, i: int) -> str | None:
        return self.sequences.get(self.ids[i])

    def with_sequences(self, sequences: Mapping[str, str]) -> "ProteinTable":
        """Attach sequences; ids only present in `sequences` are appended as new nodes."""
        extra = [pid for pid in sequences if pid not in self._index]
        merged = dict(self.sequences)
        merged.update(sequences)
        return ProteinTable(self.ids + tuple(extra), merged)


@dataclass(frozen=True)
class Edge:
    a: int
    b: int
    labels: int


@dataclass(frozen=True)
class InteractionTable:
    edges: tuple[Edge, ...]

    def __post_init__(self):
        lookup = {}
        for k, e in enumerate(self.edges):
            if e.a == e.b:
                raise GraphError(f"self-interaction at node {e.a}")
            if e.labels == 0:
                raise GraphError(f"edge {k} has no labels")
            key = (min(e.a, e.b), max(e.a, e.b))
            if key in lookup:
                raise GraphError(f"duplicate pair {key}")
            lookup[key] = k
        object.__setattr__(self, "lookup", lookup)

    def __len__(self) -> int:
        return len(self.edges)

    def find(self, a: int, b: int) -> int | None:
        return self.lookup.get((min(a, b), max(a, b)))

    def pairs(self) -> list[tuple[int, int]]:
        return [(e.a, e.b) for e in self.edges]

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]], labels: Iterable[int] | None = None):
        pairs = list(pairs)
        masks = [1] * len(pairs) if labels is None else list(labels)
        return cls(tuple(Edge(min(a, b), max(a, b), m) for (a, b), m in zip(pairs, masks)))


@dataclass(frozen=True)
class Dataset:
    proteins: ProteinTable
    interactions: InteractionTable

    @property
    def n(self) -> int:
        return len(self.proteins)

    def to_json(self) -> str:
        doc = {
            "proteins": [
                {"id": pid, **({"sequence": self.proteins.sequences[pid]} if pid in self.proteins.sequences else {})}
                for pid in self.proteins.ids
            ],
            "edges": [
                {"a": e.a, "b": e.b, "labels": mask_to_labels(e.labels)} for e in self.interactions.edges
            ],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Dataset":
        doc = json.loads(text)
        ids = tuple(p["id"] for p in doc["proteins"])
        seqs = {p["id"]: p["sequence"] for p in doc["proteins"] if p.get("sequence")}
        n = len(ids)
        edges = []
        for k, e in enumerate(doc["edges"]):
            a, b = int(e["a"]), int(e["b"])
            if not (0 <= a < n and 0 <= b < n):
                raise GraphError(f"edge {k} endpoint out of range")
            edges.append(Edge(min(a, b), max(a, b), labels_to_mask(e["labels"])))
        return cls(ProteinTable(ids, seqs), InteractionTable(tuple(edges)))

    def summary(self) -> dict:
        hist = {name: 0 for name in LABELS}
        for e in self.interactions.edges:
            for name in mask_to_labels(e.labels):
                hist[name] += 1
        return {
            "n": self.n,
            "M": len(self.interactions),
            "with_sequence": sum(1 for pid in self.proteins.ids if pid in self.proteins.sequences),
            "label_histogram": hist,
        }


def _read(text: str | TextIO) -> str:
    return text if isinstance(text, str) else text.read()


def parse_interactions(
    text: str | TextIO, format: str = "auto", source: str | None = None
) -> tuple[InteractionTable, ProteinTable]:
    """Parse a tab-separated interaction file.

    ``format`` is ``row-per-type`` (one type name per row), ``multi-label-row``
    (comma-joined type names) or ``auto`` (decided from the header).
    """
    lines = _read(text).splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("empty interaction file", source=source)
    header = [h.strip().lower() for h in lines[0].split("\t")]
    if format == "auto":
        if len(header) >= 3 and header[2] == "types":
            format = "multi-label-row"
        elif len(header) >= 3 and header[2] == "type":
            format = "row-per-type"
        else:
            raise ParseError(f"unrecognized header {lines[0]!r}", 1, source)
    if format not in ("row-per-type", "multi-label-row"):
        raise ValueError(f"unknown interaction format {format!r}")

    index: dict[str, int] = {}
    merged: dict[tuple[int, int], int] = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        cols = raw.rstrip("\r\n").split("\t")
        if len(cols) < 3 or not cols[0].strip() or not cols[1].strip() or not cols[2].strip():
            raise ParseError(f"expected 3 tab-separated columns, got {raw!r}", lineno, source)
        pa, pb, types = cols[0].strip(), cols[1].strip(), cols[2]
        if pa == pb:
            raise ParseError(f"self-interaction {pa}", lineno, source)
        names = [types] if format == "row-per-type" else [t for t in types.split(",") if t.strip()]
        try:
            mask = labels_to_mask(names)
        except KeyError as exc:
            raise ParseError(
                f"unknown interaction type {exc.args[0]!r}; valid types are {', '.join(LABELS)}",
                lineno,
                source,
            ) from None
        if mask == 0:
            raise ParseError("row has no interaction type", lineno, source)
        ia = index.setdefault(pa, len(index))
        ib = index.setdefault(pb, len(index))
        key = (min(ia, ib), max(ia, ib))
        merged[key] = merged.get(key, 0) | mask

    edges = tuple(Edge(a, b, m) for (a, b), m in merged.items())
    return InteractionTable(edges), ProteinTable(tuple(index))


def format_interactions(interactions: InteractionTable, proteins: ProteinTable) -> str:
    """Inverse of `parse_interactions` in multi-label-row form."""
    out = ["protein_a\tprotein_b\ttypes"]
    for e in interactions.edges:
        out.append(f"{proteins.ids[e.a]}\t{proteins.ids[e.b]}\t{','.join(mask_to_labels(e.labels))}")
    return "\n".join(out) + "\n"


def parse_sequences(text: str | TextIO, source: str | None = None) -> tuple[dict[str, str], int]:
    """Parse FASTA into ``{id: sequence}``.

    Returns the mapping and the number of residues replaced by ``X``.
    """
    body = _read(text)
    if not body.strip():
        raise ParseError("empty sequence file", source=source)
    records: dict[str, list[str]] = {}
    current = None
    replaced = 0
    for lineno, raw in enumerate(body.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(">"):
            current = line[1:].split()[0] if line[1:].strip() else ""
            if not current:
                raise ParseError("FASTA header without id", lineno, source)
            if current in records:
                raise ParseError(f"duplicate sequence id {current}", lineno, source)
            records[current] = []
            continue
        if current is None:
            raise ParseError("sequence data before first header", lineno, source)
        chunk = []
        for ch in line.upper():
            if ch in KNOWN_RESIDUES:
                chunk.append(ch)
            elif ch.isspace():
                continue
            else:
                chunk.append("X")
                replaced += 1
        records[current].append("".join(chunk))
    out = {}
    for pid, parts in records.items():
        seq = "".join(parts)
        if not seq:
            raise ParseError(f"record {pid} has an empty sequence", source=source)
        out[pid] = seq
    if replaced:
        logger.warning("replaced %d unknown residues with X", replaced)
    return out, replaced


@dataclass(frozen=True)
class PpiGraph:
    """Undirected graph; ``adjacency[u]`` is a sorted list of (neighbor, edge index)."""

    n: int
    edges: tuple[tuple[int, int], ...]
    adjacency: tuple[tuple[tuple[int, int], ...], ...]

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def degree(self, p: int) -> int:
        return len(self.adjacency[p])

    def degrees(self) -> list[int]:
        return [len(a) for a in self.adjacency]

    @classmethod
    def from_pairs(cls, n: int, pairs: Sequence[tuple[int, int]]) -> "PpiGraph":
        adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        edges = []
        for k, (a, b) in enumerate(pairs):
            if not (0 <= a < n and 0 <= b < n):
                raise GraphError(f"edge {k} endpoint ({a}, {b}) out of range for n={n}")
            if a == b:
                raise GraphError(f"self-interaction at node {a}")
            adj[a].append((b, k))
            adj[b].append((a, k))
            edges.append((min(a, b), max(a, b)))
        return cls(n, tuple(edges), tuple(tuple(sorted(row)) for row in adj))


def build_graph(interactions: InteractionTable, n: int) -> PpiGraph:
    return PpiGraph.from_pairs(n, interactions.pairs())


def neighbors(graph: PpiGraph, p: int) -> list[int]:
    if not 0 <= p < graph.n:
        raise IndexError(f"protein index {p} out of range for n={graph.n}")
    return sorted({v for v, _ in graph.adjacency[p]})


def load_dataset(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return Dataset.from_json(fh.read())
