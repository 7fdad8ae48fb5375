"""Command-line entry point: ``gnnppi <subcommand> [options]``.

Every subcommand writes JSON into ``--out-dir`` together with a
``<subcommand>.config.json`` holding the resolved arguments, validates what
it wrote, and prints a JSON summary (or a short table with ``--pretty``).

Exit codes: 0 success, 1 bad input or failed run, 2 usage error, 3 an
output failed schema validation.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, schemas
from .data import Dataset, GraphError, ParseError, build_graph, load_dataset, parse_interactions, parse_sequences
from .evaluation import EvaluationError, cross_eval, stratified_eval
from .features import AminoAcidEmbedding, handcrafted_matrix, train_skipgram, write_matrix
from .model import TrainConfig, TrainingError, load_checkpoint, require_sequences, save_checkpoint, train
from .partition import PartitionConfig, PartitionError, PartitionResult, make_partition, protein_proportions, stratify
from .randgraph import ErConfig, connectivity_threshold, corollary_experiment

log = logging.getLogger("gnnppi")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_SCHEMA = 0, 1, 2, 3
# arguments that only steer where and how output appears
_NOT_RESOLVED = {"out_dir", "log_level", "pretty", "func"}


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _write(path: Path, obj, schema=None) -> Path:
    if schema is not None:
        schemas.validate(obj, schema)
    path.write_text(_dump(obj))
    return path


def _write_config(args, extra: dict | None = None) -> None:
    resolved = {k: str(v) if isinstance(v, Path) else v for k, v in sorted(vars(args).items()) if k not in _NOT_RESOLVED}
    resolved["version"] = __version__
    resolved.update(extra or {})
    _write(args.out_dir / f"{args.command}.config.json", resolved)


def _emit(args, summary: dict, table: list[tuple[str, object]] | None = None) -> None:
    if args.pretty and table:
        width = max(len(k) for k, _ in table)
        for key, value in table:
            if isinstance(value, float):
                value = f"{value:.4f}"
            print(f"{key:<{width}}  {value}")
    else:
        sys.stdout.write(_dump(summary))


def _load_partition(dataset: Dataset, path) -> PartitionResult:
    manifest = json.loads(Path(path).read_text())
    schemas.validate(manifest, schemas.MANIFEST)
    return PartitionResult.from_manifest(build_graph(dataset.interactions, dataset.n), manifest)


# -- subcommands ---------------------------------------------------------------

def cmd_ingest(args) -> int:
    inter, prot = parse_interactions(Path(args.interactions).read_text(), args.format, source=str(args.interactions))
    if not len(inter):
        raise ParseError("interaction file contains no edges", source=str(args.interactions))
    replaced = 0
    if args.sequences:
        seqs, replaced = parse_sequences(Path(args.sequences).read_text())
        prot = prot.with_sequences(seqs)
    dataset = Dataset(prot, inter)
    text = dataset.to_json()
    schemas.validate(json.loads(text), schemas.DATASET)
    (args.out_dir / "dataset.json").write_text(text)
    summary = dict(dataset.summary(), replaced_residues=replaced)
    _write(args.out_dir / "ingest_summary.json", summary, schemas.SUMMARY)
    _write_config(args)
    _emit(args, summary, [("proteins", summary["n"]), ("edges", summary["M"]),
                          ("with sequence", summary["with_sequence"])]
          + [(f"  {k}", v) for k, v in summary["label_histogram"].items()])
    return EXIT_OK


def cmd_partition(args) -> int:
    dataset = load_dataset(args.dataset)
    graph = build_graph(dataset.interactions, dataset.n)
    config = PartitionConfig(args.scheme, args.fraction, args.t, args.seed)
    result = make_partition(graph, config)
    manifest = result.to_manifest(dataset.proteins.ids)
    _write(args.out_dir / "partition.json", manifest, schemas.MANIFEST)
    _write_config(args)
    props = {k.value: v for k, v in stratify(result)["proportions"].items()}
    summary = {
        "test_edges": len(result.test_edges),
        "train_edges": len(result.train_edges),
        "strata_proportions": props,
        "protein_proportions": protein_proportions(result),
        "roots": manifest["root_ids"],
    }
    _emit(args, summary, [("test edges", summary["test_edges"]), ("train edges", summary["train_edges"])]
          + [(f"  {k}", v) for k, v in props.items()])
    return EXIT_OK


def cmd_analyze_er(args) -> int:
    m = args.m
    if m is None and args.p is None:
        m = int(round(2 * connectivity_threshold(args.n)))
    config = ErConfig(n=args.n, m=m, p=args.p, trials=args.trials, seed=args.seed)
    report = corollary_experiment(config, test_fraction=args.fraction).to_dict()
    _write(args.out_dir / "er_report.json", report, schemas.COROLLARY)
    _write_config(args, {"m_resolved": m})
    summary = {k: report[k] for k in ("n", "m", "p", "threshold", "bs_mean", "bs_std", "train_connectivity_rate")}
    _emit(args, summary, list(summary.items()))
    return EXIT_OK


def cmd_featurize(args) -> int:
    dataset = load_dataset(args.dataset)
    seqs = require_sequences(dataset)
    if args.kind == "embedding":
        emb = AminoAcidEmbedding(train_skipgram(seqs, seed=args.seed))
        (args.out_dir / "embedding.json").write_text(emb.to_json())
        summary = {"kind": "embedding", "vocabulary": len(emb.kmer_vectors), "dim": emb.dim}
    else:
        mat = handcrafted_matrix(seqs, args.ac_lag)
        write_matrix(args.out_dir / "handcrafted.bin", mat)
        summary = {"kind": "handcrafted", "rows": int(mat.shape[0]), "cols": int(mat.shape[1])}
    _write_config(args)
    _emit(args, summary, list(summary.items()))
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    overrides = {}
    if args.config:
        overrides.update(json.loads(Path(args.config).read_text()))
    for flag in ("epochs", "lr", "batch", "ablation", "graph_mode", "threshold"):
        value = getattr(args, flag)
        if value is not None:
            overrides[flag] = value
    overrides["seed"] = args.seed
    return TrainConfig.desk(**overrides) if args.desk_scale else TrainConfig(**overrides)


def cmd_train(args) -> int:
    dataset = load_dataset(args.dataset)
    partition = _load_partition(dataset, args.partition)
    embedding = None
    if args.embedding:
        embedding = AminoAcidEmbedding.from_json(Path(args.embedding).read_text())
    resume = None
    if args.resume:
        resume = load_checkpoint(args.resume)
        stored = resume.model.config.to_dict()
        if args.epochs is not None:
            stored["epochs"] = args.epochs
        config = TrainConfig.from_dict(stored)
        resume.model.config = config
    else:
        config = _train_config(args)
    _write_config(args, {"train_config": config.to_dict()})

    log_path = args.out_dir / "train_log.jsonl"
    mode = "a" if resume is not None and log_path.exists() else "w"
    with log_path.open(mode) as fh:
        def on_epoch(rec):
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            log.info("epoch %d loss %.4f train_f1 %.4f lr %.2e", rec["epoch"], rec["loss"], rec["train_f1"], rec["lr"])

        state = train(dataset, partition, config, embedding=embedding, resume=resume, on_epoch=on_epoch)
    ckpt = args.out_dir / "checkpoint"
    manifest_path = save_checkpoint(ckpt, state)
    schemas.validate(json.loads(manifest_path.read_text()), schemas.TRAIN_RESULT)
    summary = {"epoch": state.epoch, "best_train_f1": state.best_f1, "checkpoint": "checkpoint"}
    _emit(args, summary, list(summary.items()))
    return EXIT_OK


def cmd_eval(args) -> int:
    state = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset)
    partition = _load_partition(dataset, args.partition)
    if args.second_dataset:
        other = load_dataset(args.second_dataset)
        report = cross_eval(state.model, dataset, partition, other, state.embedding, args.threshold)
    else:
        report = stratified_eval(state.model, dataset, partition, state.embedding, args.threshold,
                                 expected_fingerprint=state.partition_fingerprint)
    doc = report.to_dict()
    _write(args.out_dir / "report.json", doc, schemas.REPORT)
    if args.csv:
        (args.out_dir / "report.csv").write_text(report.to_csv())
    _write_config(args)
    _emit(args, doc, [("micro-F1", doc["micro_f1"])] + [(f"  {k}", v) for k, v in doc["strata_f1"].items()])
    return EXIT_OK


def _flatten(doc: dict) -> dict[str, float]:
    out = {"micro_f1": doc["micro_f1"]}
    for group in ("strata_f1", "per_type_f1", "strata_proportions"):
        for k, v in doc.get(group, {}).items():
            out[f"{group}.{k}"] = v
    return out


def cmd_report(args) -> int:
    """Seed aggregate: mean and population std of every score across reports."""
    values: dict[str, list[float]] = {}
    for path in args.reports:
        doc = json.loads(Path(path).read_text())
        schemas.validate(doc, schemas.REPORT)
        for k, v in _flatten(doc).items():
            values.setdefault(k, []).append(float(v))
    metrics = {k: {"mean": float(np.mean(v)), "std": float(np.std(v)), "n": len(v)} for k, v in sorted(values.items())}
    doc = {"runs": len(args.reports), "metrics": metrics}
    _write(args.out_dir / "aggregate.json", doc, schemas.AGGREGATE)
    _write_config(args)
    table = [(k, f"{m['mean']:.4f} +/- {m['std']:.4f}") for k, m in metrics.items()]
    _emit(args, doc, table)
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------

def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0 or math.isnan(value):
        raise argparse.ArgumentTypeError("fraction must lie in (0, 1)")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", type=Path, default=Path("."))
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--pretty", action="store_true", help="print a table instead of JSON")

    parser = argparse.ArgumentParser(prog="gnnppi", description="Multi-type PPI prediction pipeline.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="parse TSV + FASTA into dataset.json")
    p.add_argument("--interactions", required=True)
    p.add_argument("--sequences")
    p.add_argument("--format", default="auto", choices=["auto", "row-per-type", "multi-label-row"])
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("partition", parents=[common], help="split edges into train/test")
    p.add_argument("--dataset", required=True)
    p.add_argument("--scheme", type=str.lower, default="random", choices=["random", "bfs", "dfs"])
    p.add_argument("--fraction", type=_fraction, default=0.2)
    p.add_argument("-t", "--root-degree-threshold", dest="t", type=int, default=5)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("analyze-er", parents=[common], help="random-partition strata on Erdos-Renyi graphs")
    p.add_argument("--n", type=int, required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--m", type=int, help="edge count (default: twice the connectivity threshold)")
    group.add_argument("--p", type=float, help="edge probability")
    p.add_argument("--fraction", type=_fraction, default=0.2)
    p.add_argument("--trials", type=int, default=20)
    p.set_defaults(func=cmd_analyze_er)

    p = sub.add_parser("featurize", parents=[common], help="3-mer embedding or handcrafted features")
    p.add_argument("--dataset", required=True)
    p.add_argument("--kind", default="embedding", choices=["embedding", "handcrafted"])
    p.add_argument("--ac-lag", type=int, default=30)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", parents=[common], help="train the classifier on a partition")
    p.add_argument("--dataset", required=True)
    p.add_argument("--partition", required=True)
    p.add_argument("--embedding", help="embedding.json from featurize (trained on the fly otherwise)")
    p.add_argument("--config", help="JSON file of model/training overrides")
    p.add_argument("--desk-scale", action="store_true", help="small widths for CPU-only runs")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--ablation", choices=["full", "pie_only", "pge_only"])
    p.add_argument("--graph-mode", choices=["GCA", "GCT"])
    p.add_argument("--resume", help="checkpoint directory to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score a checkpoint, overall and per stratum")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--partition", required=True)
    p.add_argument("--second-dataset", help="evaluate on another dataset, excluding trainset pairs")
    p.add_argument("--threshold", type=float)
    p.add_argument("--csv", action="store_true", help="also write report.csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="mean and std over several report.json files")
    p.add_argument("reports", nargs="+")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except jsonschema.ValidationError as exc:
        log.error("output failed validation: %s", exc.message)
        return EXIT_SCHEMA
    except (ParseError, GraphError, PartitionError, EvaluationError, TrainingError, ValueError, KeyError,
            OSError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
