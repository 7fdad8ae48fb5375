"""Sequence encoder -> GIN over the PPI graph -> pairwise multi-label classifier."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .data import LABELS, NUM_LABELS, Dataset, PpiGraph, mask_to_bits
from .features import (
    ROW_DIM,
    AminoAcidEmbedding,
    encode_protein,
    handcrafted_matrix,
    train_skipgram,
)
from .metrics import micro_f1
from .partition import PartitionResult
from .tensor import (
    AdamState,
    BiGRU,
    Conv1d,
    Linear,
    Module,
    ReduceOnPlateau,
    ShapeError,
    Tensor,
    adam_step,
    aggregate,
    bce_loss,
    load_arrays,
    masked_mean,
    max_pool1d,
    mul,
    relu,
    save_arrays,
    sigmoid,
    tsum,
)

logger = logging.getLogger(__name__)


class GraphMode(str, Enum):
    GCA = "GCA"
    GCT = "GCT"


class Ablation(str, Enum):
    FULL = "full"
    PIE_ONLY = "pie_only"
    PGE_ONLY = "pge_only"


@dataclass
class TrainConfig:
    pie_dim: int = 256
    pge_dim: int = 50
    gin_layers: int = 1
    learn_eps: bool = True
    eps_init: float = 0.0
    conv_channels: int = 64
    kernel: int = 3
    pool: int = 3
    gru_hidden: int = 64
    max_len: int = 2000
    pair_combine: str = "elementwise"  # or "dot"
    lr: float = 0.001
    weight_decay: float = 5e-4
    decoupled_decay: bool = False
    batch: int = 1024
    epochs: int = 300
    reduce_rate: float = 0.5
    patience: int = 20
    graph_mode: GraphMode = GraphMode.GCA
    ablation: Ablation = Ablation.FULL
    ac_lag: int = 30
    threshold: float = 0.5
    seed: int = 0
    desk_scale: bool = False

    def __post_init__(self):
        self.graph_mode = GraphMode(self.graph_mode)
        self.ablation = Ablation(self.ablation)
        if self.pair_combine not in ("elementwise", "dot"):
            raise ValueError("pair_combine must be 'elementwise' or 'dot'")
        for name in ("pie_dim", "pge_dim", "conv_channels", "kernel", "pool", "gru_hidden", "max_len", "batch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.gin_layers < 1 and self.ablation is not Ablation.PIE_ONLY:
            raise ValueError("gin_layers must be >= 1")

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        base = dict(pie_dim=32, pge_dim=16, conv_channels=16, gru_hidden=16, batch=64, max_len=256, desk_scale=True)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["graph_mode"] = self.graph_mode.value
        d["ablation"] = self.ablation.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


# -- encoders -------------------------------------------------------------------

@dataclass
class NodeInputs:
    """Per-protein model inputs: padded residue matrices or a handcrafted feature matrix."""

    matrices: np.ndarray | None = None  # (n, L, 13)
    lengths: np.ndarray | None = None  # (n,)
    handcrafted: np.ndarray | None = None  # (n, d)

    @property
    def n(self) -> int:
        return len(self.lengths) if self.matrices is not None else self.handcrafted.shape[0]


class PieEncoder(Module):
    """conv -> ReLU -> max-pool -> BiGRU -> masked mean over time -> FC."""

    def __init__(self, config: TrainConfig, rng: np.random.Generator, in_dim: int = ROW_DIM):
        self.kernel = config.kernel
        self.pool = config.pool
        self.conv = Conv1d(in_dim, config.conv_channels, config.kernel, rng)
        self.gru = BiGRU(config.conv_channels, config.gru_hidden, rng)
        self.fc = Linear(2 * config.gru_hidden, config.pie_dim, rng)

    @property
    def min_rows(self) -> int:
        return self.kernel + self.pool - 1

    def steps(self, lengths: np.ndarray) -> np.ndarray:
        rows = np.maximum(lengths, self.min_rows)
        return np.maximum(1, (rows - self.kernel + 1) // self.pool)

    def __call__(self, matrices: np.ndarray, lengths: np.ndarray) -> Tensor:
        if matrices.ndim != 3 or matrices.shape[0] == 0 or matrices.shape[1] == 0:
            raise ShapeError(f"PIE expects a non-empty (n, L, {ROW_DIM}) batch, got {matrices.shape}")
        if matrices.shape[1] < self.min_rows:
            pad = np.zeros((matrices.shape[0], self.min_rows - matrices.shape[1], matrices.shape[2]))
            matrices = np.concatenate([matrices, pad], axis=1)
        h = max_pool1d(relu(self.conv(Tensor(matrices))), self.pool)
        steps = self.steps(np.asarray(lengths))
        mask = (np.arange(h.shape[1])[None, :] < steps[:, None]).astype(float)
        return self.fc(masked_mean(self.gru(h, mask), mask))


def pad_matrices(mats: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([m.shape[0] for m in mats])
    out = np.zeros((len(mats), int(lengths.max()), mats[0].shape[1]))
    for i, m in enumerate(mats):
        out[i, : m.shape[0]] = m
    return out, lengths


def pie_encode(matrix, encoder: PieEncoder) -> np.ndarray:
    """Encode one protein matrix (rows x 13) to a pie_dim vector."""
    rows = np.asarray(getattr(matrix, "rows", matrix))
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ValueError("empty protein matrix")
    return encoder(rows[None], np.array([rows.shape[0]])).data[0]


def gin_forward(x: Tensor, adj, eps, mlp: Callable[[Tensor], Tensor]) -> Tensor:
    """MLP((1 + eps) * x_p + sum of neighbor rows) for every node p."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if adj.shape != (x.shape[0], x.shape[0]):
        raise ShapeError(f"gin_forward: adjacency {adj.shape} does not match {x.shape[0]} feature rows")
    scale = 1.0 + (eps if isinstance(eps, Tensor) else Tensor(eps))
    return mlp(mul(x, scale) + aggregate(adj, x))


class GinLayer(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, learn_eps: bool = True, eps_init: float = 0.0):
        self.eps = Tensor(np.array(eps_init), requires_grad=learn_eps, name="eps")
        self.lin1 = Linear(d_in, d_out, rng)
        self.lin2 = Linear(d_out, d_out, rng)

    def mlp(self, h: Tensor) -> Tensor:
        return self.lin2(relu(self.lin1(h)))

    def __call__(self, x: Tensor, adj) -> Tensor:
        if x.shape[-1] != self.lin1.weight.shape[0]:
            raise ShapeError(f"GIN layer expects width {self.lin1.weight.shape[0]}, got {x.shape}")
        return gin_forward(x, adj, self.eps, self.mlp)


def combine_pair(gi: Tensor, gj: Tensor, mode: str = "elementwise") -> Tensor:
    prod = mul(gi, gj)
    return prod if mode == "elementwise" else tsum(prod, axis=-1, keepdims=True)


def predict_pair(gi, gj, classifier: Linear, mode: str = "elementwise") -> Tensor:
    """sigmoid(FC(g_i * g_j)); symmetric in (i, j)."""
    gi = gi if isinstance(gi, Tensor) else Tensor(gi)
    gj = gj if isinstance(gj, Tensor) else Tensor(gj)
    return sigmoid(classifier(combine_pair(gi, gj, mode)))


class GnnPpiModel(Module):
    def __init__(self, config: TrainConfig, handcrafted_dim: int | None = None):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.pie = None
        self.gin: list[GinLayer] = []
        if config.ablation is Ablation.PGE_ONLY:
            if handcrafted_dim is None:
                raise ValueError("pge_only needs the handcrafted feature width")
            width = handcrafted_dim
        else:
            self.pie = PieEncoder(config, rng)
            width = config.pie_dim
        if config.ablation is not Ablation.PIE_ONLY:
            for _ in range(config.gin_layers):
                self.gin.append(GinLayer(width, config.pge_dim, rng, config.learn_eps, config.eps_init))
                width = config.pge_dim
        self.out_dim = width
        cls_in = width if config.pair_combine == "elementwise" else 1
        self.classifier = Linear(cls_in, NUM_LABELS, rng)
        self.handcrafted_dim = handcrafted_dim

    def encode(self, inputs: NodeInputs, adj) -> Tensor:
        if self.pie is not None:
            h = self.pie(inputs.matrices, inputs.lengths)
        else:
            h = Tensor(inputs.handcrafted)
        for i, layer in enumerate(self.gin):
            if i:
                h = relu(h)
            h = layer(h, adj)
        return h

    def predict(self, nodes: Tensor, pairs: np.ndarray) -> Tensor:
        pairs = np.asarray(pairs)
        return predict_pair(nodes[pairs[:, 0]], nodes[pairs[:, 1]], self.classifier, self.config.pair_combine)


# -- graphs and inputs ------------------------------------------------------------

def build_message_graph(partition: PartitionResult, mode) -> PpiGraph:
    """GCA: every edge; GCT: train edges only (test-only proteins become isolated)."""
    mode = GraphMode(mode)
    if mode is GraphMode.GCA:
        return PpiGraph.from_pairs(partition.n, list(partition.edges))
    return PpiGraph.from_pairs(partition.n, [partition.edges[k] for k in partition.train_edges])


def adjacency_matrix(graph: PpiGraph) -> sp.csr_matrix:
    if not graph.edges:
        return sp.csr_matrix((graph.n, graph.n))
    e = np.array(graph.edges)
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    return sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(graph.n, graph.n))


class MissingSequences(ValueError):
    pass


def require_sequences(dataset: Dataset) -> list[str]:
    missing = [pid for pid in dataset.proteins.ids if pid not in dataset.proteins.sequences]
    if missing:
        preview = ", ".join(missing[:5])
        raise MissingSequences(f"{len(missing)} proteins lack sequences (e.g. {preview})")
    return [dataset.proteins.sequences[pid] for pid in dataset.proteins.ids]


def build_inputs(dataset: Dataset, config: TrainConfig, embedding: AminoAcidEmbedding | None) -> NodeInputs:
    seqs = require_sequences(dataset)
    if config.ablation is Ablation.PGE_ONLY:
        return NodeInputs(handcrafted=handcrafted_matrix(seqs, config.ac_lag))
    if embedding is None:
        raise ValueError("sequence encoder needs an amino-acid embedding")
    mats = [encode_protein(s, embedding, config.max_len).rows for s in seqs]
    matrices, lengths = pad_matrices(mats)
    return NodeInputs(matrices=matrices, lengths=lengths)


def label_matrix(dataset: Dataset) -> np.ndarray:
    return np.array([mask_to_bits(e.labels) for e in dataset.interactions.edges], dtype=float).reshape(-1, NUM_LABELS)


# -- training --------------------------------------------------------------------

class TrainingError(RuntimeError):
    pass


@dataclass
class TrainState:
    model: GnnPpiModel
    embedding: AminoAcidEmbedding | None
    history: list[dict] = field(default_factory=list)
    optimizer: AdamState | None = None
    scheduler: ReduceOnPlateau | None = None
    epoch: int = 0
    best_f1: float = -1.0
    best_loss: float = math.inf
    best_params: dict[str, np.ndarray] | None = None
    last_params: dict[str, np.ndarray] | None = None
    partition_fingerprint: str | None = None


def partition_fingerprint(partition: PartitionResult) -> str:
    payload = json.dumps({"n": partition.n, "test": list(partition.test_edges), "m": len(partition.edges)})
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _snapshot(model: Module) -> dict[str, np.ndarray]:
    return {k: v.data.copy() for k, v in model.parameters().items()}


def train(
    dataset: Dataset,
    partition: PartitionResult,
    config: TrainConfig,
    embedding: AminoAcidEmbedding | None = None,
    resume: TrainState | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainState:
    """Joint end-to-end training on the partition's train edges.

    Each optimizer step re-encodes every protein (sequence encoder, then GIN
    over the message graph) and scores one minibatch of train edges. Test
    edges may carry messages under GCA but never enter the loss.
    """
    if partition.n != dataset.n or len(partition.edges) != len(dataset.interactions):
        raise ValueError("partition does not match the dataset")
    if not partition.train_edges:
        raise ValueError("partition has no train edges")
    if config.ablation is not Ablation.PGE_ONLY and embedding is None:
        if resume is not None and resume.embedding is not None:
            embedding = resume.embedding
        else:
            embedding = train_skipgram(require_sequences(dataset), seed=config.seed)
            embedding = AminoAcidEmbedding(embedding)
    inputs = build_inputs(dataset, config, embedding)
    adj = adjacency_matrix(build_message_graph(partition, config.graph_mode))
    pairs = np.array(partition.edges)
    labels = label_matrix(dataset)
    train_ids = np.array(partition.train_edges)

    if resume is None:
        hdim = inputs.handcrafted.shape[1] if inputs.handcrafted is not None else None
        state = TrainState(GnnPpiModel(config, hdim), embedding)
        state.optimizer = AdamState(lr=config.lr, weight_decay=config.weight_decay, decoupled=config.decoupled_decay)
        state.scheduler = ReduceOnPlateau(state.optimizer, config.reduce_rate, config.patience)
    else:
        state = resume
        state.embedding = embedding
        if state.last_params is not None:
            state.model.load_arrays(state.last_params)
    state.partition_fingerprint = partition_fingerprint(partition)
    model = state.model
    params = model.parameters()
    # the shuffle stream continues across resumes by folding in the epoch number
    for _ in range(config.epochs):
        state.epoch += 1
        rng = np.random.default_rng([config.seed, state.epoch])
        order = rng.permutation(train_ids)
        total = 0.0
        preds = []
        truth = []
        for step, start in enumerate(range(0, order.size, config.batch)):
            batch = order[start : start + config.batch]
            for p in params.values():
                p.zero_grad()
            nodes = model.encode(inputs, adj)
            probs = model.predict(nodes, pairs[batch])
            loss = bce_loss(probs, labels[batch])
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {state.epoch}, step {step}")
            loss.backward()
            grads = {k: p.grad for k, p in params.items() if p.grad is not None}
            adam_step({k: p.data for k, p in params.items()}, grads, state.optimizer)
            total += value
            preds.append(probs.data)
            truth.append(labels[batch])
        epoch_loss = total / order.size
        train_f1 = micro_f1(np.concatenate(preds), np.concatenate(truth), config.threshold)
        lr_used = state.optimizer.lr
        state.scheduler.step(epoch_loss)
        record = {"epoch": state.epoch, "lr": lr_used, "loss": epoch_loss, "train_f1": train_f1}
        state.history.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if train_f1 > state.best_f1 or (train_f1 == state.best_f1 and epoch_loss < state.best_loss):
            state.best_f1, state.best_loss = train_f1, epoch_loss
            state.best_params = _snapshot(model)
    state.last_params = _snapshot(model)
    if state.best_params is not None:
        model.load_arrays(state.best_params)
    return state


# -- inference -------------------------------------------------------------------

def score_edges(
    model: GnnPpiModel,
    dataset: Dataset,
    message_graph: PpiGraph,
    edge_ids: Iterable[int],
    embedding: AminoAcidEmbedding | None,
) -> np.ndarray:
    """Probabilities (len(edge_ids), 7) for the given dataset edges."""
    edge_ids = list(edge_ids)
    if message_graph.n != dataset.n:
        raise ValueError("message graph and dataset disagree on the protein count")
    inputs = build_inputs(dataset, model.config, embedding)
    nodes = model.encode(inputs, adjacency_matrix(message_graph))
    if not edge_ids:
        return np.zeros((0, NUM_LABELS))
    pairs = np.array([dataset.interactions.pairs()[k] for k in edge_ids])
    return model.predict(nodes, pairs).data


# -- checkpoints ------------------------------------------------------------------

CHECKPOINT_FORMAT = "gnnppi-checkpoint-v1"


def save_checkpoint(directory, state: TrainState, extra: dict | None = None) -> Path:
    """Write manifest.json, params.{json,bin} (best weights), last.{json,bin}
    (final weights + Adam moments) and embedding.json into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    model = state.model
    cfg = model.config
    params = state.best_params or _snapshot(model)
    save_arrays(directory / "params", params, {"kind": "best"})
    last = dict(state.last_params or _snapshot(model))
    opt = state.optimizer
    for k, v in opt.m.items():
        last[f"adam.m.{k}"] = v
    for k, v in opt.v.items():
        last[f"adam.v.{k}"] = v
    save_arrays(
        directory / "last",
        last,
        {
            "kind": "last",
            "adam": {"lr": opt.lr, "step": opt.step, "beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps,
                     "weight_decay": opt.weight_decay, "decoupled": opt.decoupled},
            "scheduler": {"best": state.scheduler.best if math.isfinite(state.scheduler.best) else None,
                          "bad_epochs": state.scheduler.bad_epochs},
        },
    )
    if state.embedding is not None:
        (directory / "embedding.json").write_text(state.embedding.to_json())
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "labels": list(LABELS),
        "config": cfg.to_dict(),
        "graph_mode": cfg.graph_mode.value,
        "ablation": cfg.ablation.value,
        "dims": {"pie": cfg.pie_dim, "pge": cfg.pge_dim, "out": model.out_dim, "handcrafted": model.handcrafted_dim},
        "epoch": state.epoch,
        "best_train_f1": state.best_f1,
        "best_loss": state.best_loss if math.isfinite(state.best_loss) else None,
        "partition_fingerprint": state.partition_fingerprint,
        "history": state.history,
    }
    manifest.update(extra or {})
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def load_checkpoint(directory) -> TrainState:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{directory} is not a model checkpoint")
    if manifest["labels"] != list(LABELS):
        raise ValueError("checkpoint label order differs from this build")
    cfg = TrainConfig.from_dict(manifest["config"])
    model = GnnPpiModel(cfg, manifest["dims"].get("handcrafted"))
    best, _ = load_arrays(directory / "params")
    model.load_arrays(best)
    emb_path = directory / "embedding.json"
    embedding = AminoAcidEmbedding.from_json(emb_path.read_text()) if emb_path.exists() else None
    state = TrainState(model, embedding, list(manifest.get("history", [])))
    state.epoch = manifest["epoch"]
    state.best_f1 = manifest["best_train_f1"]
    state.best_loss = manifest["best_loss"] if manifest["best_loss"] is not None else math.inf
    state.best_params = best
    state.partition_fingerprint = manifest.get("partition_fingerprint")
    last_path = directory / "last.json"
    if last_path.exists():
        last, meta = load_arrays(directory / "last")
        names = set(model.parameters())
        state.last_params = {k: v for k, v in last.items() if k in names}
        a = meta["adam"]
        opt = AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"],
                        weight_decay=a["weight_decay"], decoupled=a["decoupled"], step=a["step"])
        opt.m = {k[len("adam.m."):]: v for k, v in last.items() if k.startswith("adam.m.")}
        opt.v = {k[len("adam.v."):]: v for k, v in last.items() if k.startswith("adam.v.")}
        state.optimizer = opt
        sched = ReduceOnPlateau(opt, cfg.reduce_rate, cfg.patience)
        s = meta["scheduler"]
        sched.best = s["best"] if s["best"] is not None else math.inf
        sched.bad_epochs = s["bad_epochs"]
        state.scheduler = sched
    return state
