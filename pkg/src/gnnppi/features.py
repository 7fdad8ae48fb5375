"""Protein sequence features.

* 13-dim per-residue rows: a 5-dim skip-gram vector of the 3-mer starting at
  the residue, followed by an 8-way one-hot of the residue's class.
* CTD: composition/transition/distribution over seven 3-class attributes (147 dims).
* AC: auto-covariance of seven numeric property scales over lags 1..lag_max.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

STANDARD_RESIDUES = "ACDEFGHIKLMNPQRSTVWY"
EMBED_DIM = 5
NUM_CLASSES = 8
ROW_DIM = EMBED_DIM + NUM_CLASSES
DEFAULT_MAX_LEN = 2000

# Seven classes by dipole and side-chain volume; U, O, X and anything else -> 8.
AA_CLASSES: dict[int, str] = {
    1: "AGV",
    2: "ILFP",
    3: "YMTS",
    4: "HNQW",
    5: "RK",
    6: "DE",
    7: "C",
}
_AA_CLASS = {aa: c for c, group in AA_CLASSES.items() for aa in group}


def aa_class(residue: str) -> int:
    if len(residue) != 1 or not residue.isalpha():
        raise ValueError(f"not an amino-acid letter: {residue!r}")
    return _AA_CLASS.get(residue.upper(), 8)


# (name, class1, class2, class3) for the CTD attributes.
CTD_ATTRIBUTES: tuple[tuple[str, str, str, str], ...] = (
    ("hydrophobicity", "RKEDQN", "GASTPHY", "CLVIMFW"),
    ("vdw_volume", "GASTPDC", "NVEQIL", "MHKFRYW"),
    ("polarity", "LIFWCMVY", "PATGS", "HQRKNED"),
    ("charge", "KR", "ANCQGHILMFPSTWYV", "DE"),
    ("secondary_structure", "EALMQKRH", "VIYCWFT", "GNPSD"),
    ("solvent_accessibility", "ALFCGIVW", "RKQEND", "MPSTHY"),
    ("polarizability", "GASDT", "CPNVEQIL", "KMHFRYW"),
)
_CTD_LOOKUP = [
    {aa: c for c, group in enumerate(groups, start=1) for aa in group}
    for _, *groups in CTD_ATTRIBUTES
]
CTD_DIM = len(CTD_ATTRIBUTES) * (3 + 3 + 15)
_QUANTILES = (0.0, 0.25, 0.5, 0.75, 1.0)


def ctd_features(sequence: str) -> np.ndarray:
    """147-dim CTD vector; per attribute: 3 composition, 3 transition, 15 distribution.

    Residues outside the 20 standard amino acids are dropped before counting.
    """
    seq = sequence.upper()
    kept = "".join(ch for ch in seq if ch in STANDARD_RESIDUES)
    if len(kept) != len(seq):
        logger.warning("CTD skipped %d non-standard residues", len(seq) - len(kept))
    if len(kept) < 2:
        raise ValueError("CTD needs at least 2 standard residues")
    length = len(kept)
    out = np.zeros(CTD_DIM)
    for a, lookup in enumerate(_CTD_LOOKUP):
        cls = np.array([lookup[ch] for ch in kept])
        base = a * 21
        for c in (1, 2, 3):
            out[base + c - 1] = np.count_nonzero(cls == c) / length
        pairs = np.stack([cls[:-1], cls[1:]])
        lo, hi = pairs.min(axis=0), pairs.max(axis=0)
        for j, (x, y) in enumerate(((1, 2), (1, 3), (2, 3))):
            out[base + 3 + j] = np.count_nonzero((lo == x) & (hi == y)) / (length - 1)
        for c in (1, 2, 3):
            positions = np.flatnonzero(cls == c) + 1
            k = positions.size
            for q, frac in enumerate(_QUANTILES):
                if k == 0:
                    continue
                nth = max(1, math.floor(frac * k))
                out[base + 6 + (c - 1) * 5 + q] = positions[nth - 1] / length
    return out


# Numeric scales for auto-covariance: hydrophobicity, hydrophilicity, side-chain
# volume, polarity, polarizability, solvent-accessible surface area, net charge index.
AC_SCALES: dict[str, dict[str, float]] = {
    "hydrophobicity": dict(zip(STANDARD_RESIDUES, (
        0.62, 0.29, -0.90, -0.74, 1.19, 0.48, -0.40, 1.38, -1.50, 1.06,
        0.64, -0.78, 0.12, -0.85, -2.53, -0.18, -0.05, 1.08, 0.81, 0.26))),
    "hydrophilicity": dict(zip(STANDARD_RESIDUES, (
        -0.5, -1.0, 3.0, 3.0, -2.5, 0.0, -0.5, -1.8, 3.0, -1.8,
        -1.3, 0.2, 0.0, 0.2, 3.0, 0.3, -0.4, -1.5, -3.4, -2.3))),
    "side_chain_volume": dict(zip(STANDARD_RESIDUES, (
        27.5, 44.6, 40.0, 62.0, 115.5, 0.0, 79.0, 93.5, 100.0, 93.5,
        94.1, 58.7, 41.9, 80.7, 105.0, 29.3, 51.3, 71.5, 145.5, 117.3))),
    "polarity": dict(zip(STANDARD_RESIDUES, (
        8.1, 5.5, 13.0, 12.3, 5.2, 9.0, 10.4, 5.2, 11.3, 4.9,
        5.7, 11.6, 8.0, 10.5, 10.5, 9.2, 8.6, 5.9, 5.4, 6.2))),
    "polarizability": dict(zip(STANDARD_RESIDUES, (
        0.046, 0.128, 0.105, 0.151, 0.290, 0.000, 0.230, 0.186, 0.219, 0.186,
        0.221, 0.134, 0.131, 0.180, 0.291, 0.062, 0.108, 0.140, 0.409, 0.298))),
    "solvent_accessible_area": dict(zip(STANDARD_RESIDUES, (
        1.181, 1.461, 1.587, 1.862, 2.228, 0.881, 2.025, 1.810, 2.258, 1.931,
        2.034, 1.655, 1.468, 1.932, 2.560, 1.298, 1.525, 1.645, 2.663, 2.368))),
    "net_charge_index": dict(zip(STANDARD_RESIDUES, (
        0.007187, -0.03661, -0.02382, 0.006802, 0.037552, 0.179052, -0.01069,
        0.021631, 0.017708, 0.051672, 0.002683, 0.005392, 0.239531, 0.049211,
        0.043587, 0.004627, 0.003352, 0.057004, 0.037977, 0.023599))),
}
_AC_MATRIX = np.array([[AC_SCALES[s][aa] for s in AC_SCALES] for aa in STANDARD_RESIDUES])


def property_series(sequence: str) -> np.ndarray:
    """(L, 7) matrix of raw property values, non-standard residues dropped."""
    idx = [STANDARD_RESIDUES.index(ch) for ch in sequence.upper() if ch in STANDARD_RESIDUES]
    return _AC_MATRIX[idx]


def auto_covariance(series: np.ndarray, lag_max: int) -> np.ndarray:
    """AC over columns of ``series`` (L, p), each column z-normalized first.

    Output is lag-major per property: ``out[j * lag_max + lag - 1]``.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    length, n_props = series.shape
    if length <= lag_max:
        raise ValueError(f"sequence length {length} must exceed lag_max={lag_max}")
    centered = series - series.mean(axis=0)
    std = series.std(axis=0)
    # constant columns can leave rounding noise in std
    flat = std <= 1e-12 * np.maximum(1.0, np.abs(series).max(axis=0))
    z = np.divide(centered, std, out=np.zeros_like(centered), where=~flat)
    out = np.empty((n_props, lag_max))
    for lag in range(1, lag_max + 1):
        out[:, lag - 1] = (z[:-lag] * z[lag:]).sum(axis=0) / (length - lag)
    return out.reshape(-1)


def ac_features(sequence: str, lag_max: int = 30) -> np.ndarray:
    return auto_covariance(property_series(sequence), lag_max)


def handcrafted_features(sequence: str, lag_max: int = 30) -> np.ndarray:
    """AC followed by CTD, the input of the graph-only ablation."""
    return np.concatenate([ac_features(sequence, lag_max), ctd_features(sequence)])


def kmers(sequence: str, k: int = 3) -> list[str]:
    return [sequence[i : i + k] for i in range(len(sequence) - k + 1)]


@dataclass
class SkipGramConfig:
    dim: int = EMBED_DIM
    window: int = 2
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.025
    min_lr: float = 1e-4
    batch_size: int = 256
    seed: int = 0


def train_skipgram(sequences: Iterable[str], config: SkipGramConfig | None = None, **overrides) -> dict[str, np.ndarray]:
    """Skip-gram with negative sampling over overlapping 3-mers.

    Single-threaded and deterministic for a given seed. Returns the input
    (word) vectors keyed by 3-mer.
    """
    cfg = config or SkipGramConfig()
    if overrides:
        cfg = SkipGramConfig(**{**cfg.__dict__, **overrides})
    corpus = [kmers(s.upper()) for s in sequences]
    if not corpus:
        raise ValueError("empty corpus")
    corpus = [doc for doc in corpus if doc]
    if not corpus:
        raise ValueError("every sequence is shorter than 3 residues")

    vocab = sorted({tok for doc in corpus for tok in doc})
    tok_index = {tok: i for i, tok in enumerate(vocab)}
    counts = np.zeros(len(vocab))
    centers, contexts = [], []
    for doc in corpus:
        ids = np.array([tok_index[t] for t in doc])
        np.add.at(counts, ids, 1)
        for off in range(1, cfg.window + 1):
            if off >= ids.size:
                break
            centers.extend(ids[:-off].tolist())
            contexts.extend(ids[off:].tolist())
            centers.extend(ids[off:].tolist())
            contexts.extend(ids[:-off].tolist())
    rng = np.random.default_rng(cfg.seed)
    w_in = (rng.random((len(vocab), cfg.dim)) - 0.5) / cfg.dim
    w_out = np.zeros((len(vocab), cfg.dim))
    if not centers:
        return {tok: w_in[i].copy() for tok, i in tok_index.items()}

    centers = np.array(centers)
    contexts = np.array(contexts)
    noise = counts**0.75
    noise /= noise.sum()
    total_steps = cfg.epochs * math.ceil(centers.size / cfg.batch_size)
    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(centers.size)
        for start in range(0, order.size, cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            lr = max(cfg.min_lr, cfg.lr * (1.0 - step / total_steps))
            step += 1
            c = centers[sel]
            targets = np.concatenate(
                [contexts[sel][:, None], rng.choice(len(vocab), size=(sel.size, cfg.negatives), p=noise)],
                axis=1,
            )
            labels = np.zeros(targets.shape)
            labels[:, 0] = 1.0
            v_in = w_in[c]  # (B, d)
            v_out = w_out[targets]  # (B, 1+k, d)
            score = np.einsum("bd,bkd->bk", v_in, v_out)
            g = (labels - 1.0 / (1.0 + np.exp(-np.clip(score, -30.0, 30.0)))) * lr
            grad_in = np.einsum("bk,bkd->bd", g, v_out)
            grad_out = g[:, :, None] * v_in[:, None, :]
            np.add.at(w_out, targets, grad_out)
            np.add.at(w_in, c, grad_in)
    return {tok: w_in[i].copy() for tok, i in tok_index.items()}


@dataclass
class AminoAcidEmbedding:
    """3-mer co-occurrence vectors plus the class one-hot."""

    kmer_vectors: Mapping[str, np.ndarray] = field(default_factory=dict)
    dim: int = EMBED_DIM

    def e1(self, kmer: str) -> np.ndarray:
        vec = self.kmer_vectors.get(kmer)
        return np.zeros(self.dim) if vec is None else np.asarray(vec, dtype=np.float64)

    @staticmethod
    def e2(residue: str) -> np.ndarray:
        row = np.zeros(NUM_CLASSES)
        row[aa_class(residue) - 1] = 1.0
        return row

    def to_json(self) -> str:
        return json.dumps(
            {tok: [float(x) for x in vec] for tok, vec in sorted(self.kmer_vectors.items())},
            sort_keys=True,
        ) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "AminoAcidEmbedding":
        doc = json.loads(text)
        vecs = {tok: np.asarray(v, dtype=np.float64) for tok, v in doc.items()}
        dims = {v.size for v in vecs.values()}
        if len(dims) > 1:
            raise ValueError("embedding vectors have inconsistent sizes")
        return cls(vecs, dims.pop() if dims else EMBED_DIM)


@dataclass
class ProteinMatrix:
    rows: np.ndarray  # (min(L, max_len), 13)
    length: int


def encode_protein(sequence: str, embedding: AminoAcidEmbedding, max_len: int = DEFAULT_MAX_LEN, pad: bool = False) -> ProteinMatrix:
    """Per-residue rows [e1(3-mer starting here), e2(residue)].

    The last two positions have no full 3-mer and get a zero e1. Sequences
    longer than ``max_len`` are truncated; ``pad`` zero-fills up to ``max_len``.
    """
    if not sequence:
        raise ValueError("empty sequence")
    seq = sequence.upper()
    length = len(seq)
    rows_n = min(length, max_len)
    rows = np.zeros((max_len if pad else rows_n, embedding.dim + NUM_CLASSES))
    for i in range(rows_n):
        if i + 3 <= length:
            rows[i, : embedding.dim] = embedding.e1(seq[i : i + 3])
        rows[i, embedding.dim + aa_class(seq[i]) - 1] = 1.0
    return ProteinMatrix(rows, length)


def write_matrix(path, matrix: np.ndarray) -> None:
    """Row-major little-endian float32 with an 8-byte (rows, cols) uint32 header."""
    arr = np.ascontiguousarray(matrix, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", *arr.shape))
        fh.write(arr.tobytes())


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        rows, cols = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != rows * cols:
        raise ValueError(f"{path}: expected {rows}x{cols} floats, found {data.size}")
    return data.reshape(rows, cols).astype(np.float64)


def handcrafted_matrix(sequences: Sequence[str], lag_max: int = 30) -> np.ndarray:
    return np.stack([handcrafted_features(s, lag_max) for s in sequences])
