"""Stratified (BS/ES/NS) scoring and the cross-dataset generalization check."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .data import LABELS, Dataset, build_graph
from .metrics import confusion, f1_from_counts, per_type_f1
from .model import (
    GnnPpiModel,
    build_message_graph,
    label_matrix,
    partition_fingerprint,
    score_edges,
)
from .partition import STRATA, PartitionResult, Stratum


class EvaluationError(ValueError):
    pass


@dataclass
class MetricReport:
    micro_f1: float
    per_type_f1: dict[str, float]
    per_type_absent: list[str]
    strata_f1: dict[str, float]
    strata_proportions: dict[str, float]
    strata_counts: dict[str, int]
    counts: dict
    threshold: float
    n_edges: int
    per_stratum_counts: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "micro_f1": self.micro_f1,
            "per_type_f1": self.per_type_f1,
            "per_type_absent": self.per_type_absent,
            "strata_f1": self.strata_f1,
            "strata_proportions": self.strata_proportions,
            "strata_counts": self.strata_counts,
            "counts": self.counts,
            "threshold": self.threshold,
            "n_edges": self.n_edges,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["stratum", "label", "tp", "fp", "fn", "f1"])
        for stratum, per_label in self.per_stratum_counts.items():
            for name, (tp, fp, fn) in per_label.items():
                writer.writerow([stratum, name, tp, fp, fn, f"{f1_from_counts(tp, fp, fn):.6f}"])
        return buf.getvalue()


def _counts_by_label(c) -> dict[str, tuple[int, int, int]]:
    return {name: (int(c["tp"][i]), int(c["fp"][i]), int(c["fn"][i])) for i, name in enumerate(LABELS)}


def metric_report(probs, labels, strata=None, threshold: float = 0.5) -> MetricReport:
    """Overall micro-F1 (pooled over every edge) plus per-label and per-stratum scores.

    Strata with no edges are left out of ``strata_f1`` rather than scored 0.
    """
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    if probs.shape[0] == 0:
        raise EvaluationError("no edges to evaluate")
    c = confusion(probs, labels, threshold)
    tp, fp, fn = int(c["tp"].sum()), int(c["fp"].sum()), int(c["fn"].sum())
    f1s, absent = per_type_f1(probs, labels, threshold)
    report = MetricReport(
        micro_f1=f1_from_counts(tp, fp, fn),
        per_type_f1={name: float(f1s[i]) for i, name in enumerate(LABELS)},
        per_type_absent=[name for i, name in enumerate(LABELS) if absent[i]],
        strata_f1={},
        strata_proportions={},
        strata_counts={},
        counts={"tp": tp, "fp": fp, "fn": fn, "per_label": {k: dict(zip(("tp", "fp", "fn"), v)) for k, v in _counts_by_label(c).items()}},
        threshold=threshold,
        n_edges=int(probs.shape[0]),
        per_stratum_counts={"Avg": _counts_by_label(c)},
    )
    if strata is not None:
        strata = [Stratum(s) for s in strata]
        total = len(strata)
        for s in STRATA:
            rows = np.array([i for i, x in enumerate(strata) if x is s], dtype=int)
            report.strata_counts[s.value] = int(rows.size)
            report.strata_proportions[s.value] = rows.size / total
            if rows.size:
                cs = confusion(probs[rows], labels[rows], threshold)
                report.strata_f1[s.value] = f1_from_counts(int(cs["tp"].sum()), int(cs["fp"].sum()), int(cs["fn"].sum()))
                report.per_stratum_counts[s.value] = _counts_by_label(cs)
    report.strata_f1["Avg"] = report.micro_f1
    return report


def stratified_eval(model: GnnPpiModel, dataset: Dataset, partition: PartitionResult, embedding=None,
                    threshold: float | None = None, expected_fingerprint: str | None = None) -> MetricReport:
    """Score the testset under the model's message-graph mode, overall and per stratum."""
    if expected_fingerprint is not None and expected_fingerprint != partition_fingerprint(partition):
        raise EvaluationError("partition manifest differs from the one the checkpoint was trained on")
    if not partition.test_edges:
        raise EvaluationError("empty testset")
    threshold = model.config.threshold if threshold is None else threshold
    graph = build_message_graph(partition, model.config.graph_mode)
    ids = list(partition.test_edges)
    probs = score_edges(model, dataset, graph, ids, embedding)
    labels = label_matrix(dataset)[ids]
    return metric_report(probs, labels, [partition.strata[k] for k in ids], threshold)


def cross_eval(model: GnnPpiModel, dataset_a: Dataset, partition_a: PartitionResult, dataset_b: Dataset,
               embedding=None, threshold: float | None = None) -> MetricReport:
    """Evaluate a model trained on A's trainset against a second dataset B.

    B's edges whose protein pair is in A's trainset are excluded; the rest
    are scored with B's full edge set as the message graph and stratified by
    whether each endpoint appears in A's trainset.
    """
    threshold = model.config.threshold if threshold is None else threshold
    ids_a = dataset_a.proteins.ids
    seen = {ids_a[p] for p in partition_a.seen}
    train_pairs = {frozenset((ids_a[a], ids_a[b])) for a, b in (partition_a.edges[k] for k in partition_a.train_edges)}
    ids_b = dataset_b.proteins.ids
    keep, strata = [], []
    for k, e in enumerate(dataset_b.interactions.edges):
        pa, pb = ids_b[e.a], ids_b[e.b]
        if frozenset((pa, pb)) in train_pairs:
            continue
        keep.append(k)
        strata.append((Stratum.NS, Stratum.ES, Stratum.BS)[(pa in seen) + (pb in seen)])
    if not keep:
        raise EvaluationError("no edges of the second dataset remain after excluding the trainset")
    graph = build_graph(dataset_b.interactions, dataset_b.n)
    probs = score_edges(model, dataset_b, graph, keep, embedding)
    labels = label_matrix(dataset_b)[keep]
    return metric_report(probs, labels, strata, threshold)
