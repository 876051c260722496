"""Batch pipeline front end: prune | walk | train | eval | synth | pipeline.

Option precedence is flags > GRAPHFOLK_SEED (seed only) > config file >
built-in defaults. The config file is flat `name = value` lines whose
names mirror the long flag names. Every stage derives its own RNG seed
from the global seed and its module name, so stages are independently
reproducible, and all outputs are staged then atomically renamed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import graph, predict, sgns, synth, walks

logger = logging.getLogger("graphfolk")

L2_GRID = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2)
GAMMA_SCALES = (0.1, 1.0, 10.0)


def module_seed(global_seed: int, module: str) -> int:
    digest = hashlib.sha256(f"{global_seed}:{module}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _load_config(path: str) -> dict[str, str]:
    cfg: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'name = value'")
            key, _, value = line.partition("=")
            cfg[key.strip()] = value.strip()
    return cfg


class _Options:
    """Resolves each option through flag -> config -> default."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = _load_config(args.config) if getattr(args, "config", None) else {}

    def get(self, name: str, default, cast=str):
        flag = getattr(self.args, name.replace("-", "_"), None)
        if flag is not None:
            return flag
        if name in self.config:
            return cast(self.config[name])
        return default

    def seed(self) -> int:
        if self.args.seed is not None:
            return self.args.seed
        env = os.environ.get("GRAPHFOLK_SEED")
        if env is not None:
            return int(env)
        if "seed" in self.config:
            return int(self.config["seed"])
        return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat name = value config file")
    p.add_argument("--seed", type=int, help="global seed (default: $GRAPHFOLK_SEED or 0)")


def _add_walk_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--walk-length", type=int, help="vertices per walk (default 80)")
    p.add_argument("--walks-per-vertex", type=int, help="walks started per vertex (default 1)")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dim", type=int, help="embedding dimensionality (default 32)")
    p.add_argument("--window-radius", type=int, help="context positions each side (default 5)")
    p.add_argument("--negatives", type=int, help="negative samples per pair (default 5)")
    p.add_argument("--epochs", type=int, help="passes over the corpus (default 5)")
    p.add_argument("--lr", type=float, help="initial learning rate (default 0.025)")
    p.add_argument("--threads", type=int, help="1 = deterministic mode (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphfolk",
        description="social-graph embeddings and socioeconomic attribute prediction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prune", help="drop edges into low in-degree targets")
    p.add_argument("--edges", required=True, help="input edge-list file")
    p.add_argument("--out", required=True, help="output edge-list file")
    p.add_argument("--min-in-degree", type=int, help="keep targets with in-degree >= N (default 10)")
    p.add_argument("--keep", help="file of ids always retained as targets")
    p.add_argument("--delimiter", help="edge-list field delimiter (default: whitespace)")
    _add_common(p)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("walk", help="generate the random-walk corpus")
    p.add_argument("--edges", required=True)
    p.add_argument("--out", required=True, help="corpus file (one walk per line)")
    p.add_argument("--delimiter", help="edge-list field delimiter (default: whitespace)")
    _add_walk_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_walk)

    p = sub.add_parser("train", help="train the embedding on a walk corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="embedding file")
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="nested-CV evaluation of a downstream task")
    p.add_argument("--embeddings", required=True, help="feature vectors (embedding text format)")
    p.add_argument("--labels", required=True, help="label CSV: id,occ_class,income")
    p.add_argument("--task", required=True, choices=["occ", "income"])
    p.add_argument("--extra-features", help="second feature file to concatenate (same format)")
    p.add_argument("--model", choices=["logreg", "ridge", "krr"], help="learner (occ: logreg; income: ridge|krr)")
    p.add_argument("--out", required=True, help="report prefix; writes <out>.jsonl and <out>.txt")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a block-model graph with labels")
    p.add_argument("--spec", required=True, help="JSON block-model spec")
    p.add_argument("--out-dir", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="synth? -> prune -> walk -> train -> eval")
    p.add_argument("--sbm-spec", help="JSON block-model spec (generates inputs)")
    p.add_argument("--edges", help="edge-list input (alternative to --sbm-spec)")
    p.add_argument("--labels", help="label CSV input (required with --edges)")
    p.add_argument("--extra-features", help="feature file concatenated at eval time")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--task", choices=["occ", "income", "both"], default="both")
    p.add_argument("--min-in-degree", type=int, help="prune threshold (default 0 here)")
    p.add_argument("--keep", help="file of ids always retained as targets")
    p.add_argument("--delimiter", help="edge-list field delimiter (default: whitespace)")
    _add_walk_flags(p)
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def cmd_prune(args: argparse.Namespace) -> int:
    opt = _Options(args)
    min_in = opt.get("min-in-degree", 10, int)
    delimiter = opt.get("delimiter", None)
    edges = graph.load_edge_list(args.edges, delimiter)
    keep = graph.load_id_file(args.keep) if args.keep else ()
    pruned = graph.prune_by_in_degree(edges, min_in, keep)
    graph.save_edge_list(pruned, args.out, delimiter or " ")
    logger.info("prune: %d -> %d edges (min in-degree %d)", len(edges), len(pruned), min_in)
    return 0


def _walk_config(opt: _Options) -> walks.WalkConfig:
    return walks.WalkConfig(
        walk_length=opt.get("walk-length", 80, int),
        walks_per_vertex=opt.get("walks-per-vertex", 1, int),
        seed=module_seed(opt.seed(), "walks"),
    )


def cmd_walk(args: argparse.Namespace) -> int:
    opt = _Options(args)
    g = graph.build_undirected(graph.load_edge_list(args.edges, opt.get("delimiter", None)))
    corpus = walks.generate_corpus(g, _walk_config(opt))
    walks.save_corpus(corpus, args.out)
    logger.info("walk: %d walks over %d vertices", len(corpus.walks), g.num_vertices)
    return 0


def _sgns_config(opt: _Options) -> sgns.SgnsConfig:
    return sgns.SgnsConfig(
        dim=opt.get("dim", 32, int),
        window_radius=opt.get("window-radius", 5, int),
        negatives_per_pair=opt.get("negatives", 5, int),
        initial_lr=opt.get("lr", 0.025, float),
        epochs=opt.get("epochs", 5, int),
        seed=module_seed(opt.seed(), "sgns"),
    )


def cmd_train(args: argparse.Namespace) -> int:
    opt = _Options(args)
    corpus = walks.load_corpus(args.corpus)
    model = sgns.train(corpus, _sgns_config(opt), threads=opt.get("threads", 1, int))
    sgns.export_embedding(model, args.out)
    logger.info("train: exported %d x %d embedding", model.vocab_size, model.dim)
    return 0


def _run_eval(
    task: str,
    embeddings_path: str,
    labels_path: str,
    extra_path: str | None,
    model_name: str | None,
    out_prefix: str,
    seed: int,
) -> predict.EvalReport:
    ids, X = sgns.load_vectors(embeddings_path)
    if extra_path:
        extra_ids, extra_X = sgns.load_vectors(extra_path)
        X = predict.concat_features(ids, X, extra_ids, extra_X)
    labels = predict.load_labels(labels_path)
    cv_task = "classification" if task == "occ" else "regression"
    full = predict.make_dataset(ids, X, labels, allow_missing=True)
    if len(full) < len(labels):
        logger.info(
            "eval %s: %d labeled users lack feature rows; evaluating on %d",
            task, len(labels) - len(full), len(full),
        )
    data = full.filter_task(cv_task)
    stratify = data.occ_class if cv_task == "classification" else None
    plan = predict.make_fold_plan(
        len(data), k_outer=10, k_inner=10, seed=module_seed(seed, "predict"),
        stratify_labels=stratify,
    )
    if cv_task == "classification":
        grid = [{"l2": v} for v in L2_GRID]
        learner = "logreg"
    elif model_name == "krr":
        gamma0 = 1.0 / data.X.shape[1]
        grid = [{"l2": v, "gamma": gamma0 * s} for v in L2_GRID for s in GAMMA_SCALES]
        learner = "krr"
    else:
        grid = [{"l2": v} for v in L2_GRID]
        learner = "ridge"
    report = predict.nested_cv(data, cv_task, grid, plan, learner=learner)
    predict.write_report_jsonl(report, f"{out_prefix}.jsonl")
    predict.write_report_table(report, f"{out_prefix}.txt")
    if cv_task == "classification":
        logger.info("eval %s: accuracy %.2f%% over %d users", task, report.aggregate["accuracy"], len(data))
    else:
        logger.info(
            "eval %s: MAE %.0f GBP, rho %.3f over %d users",
            task, report.aggregate["mae"], report.aggregate["rho"], len(data),
        )
    return report


def cmd_eval(args: argparse.Namespace) -> int:
    opt = _Options(args)
    if args.task == "occ" and args.model in ("ridge", "krr"):
        raise ValueError("occupational class uses the logreg learner")
    if args.task == "income" and args.model == "logreg":
        raise ValueError("income uses the ridge or krr learner")
    _run_eval(
        args.task, args.embeddings, args.labels, args.extra_features,
        args.model, args.out, opt.seed(),
    )
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    opt = _Options(args)
    spec = synth.load_sbm_spec(args.spec)
    if args.seed is not None or os.environ.get("GRAPHFOLK_SEED") is not None:
        spec.seed = module_seed(opt.seed(), "synth")
    edges, labels = synth.generate_sbm(spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    graph.save_edge_list(edges, out_dir / "edges.txt")
    predict.save_labels([(l.id, l.occ_class, l.income) for l in labels], out_dir / "labels.csv")
    logger.info("synth: %d vertices, %d edges -> %s", spec.num_vertices, len(edges), out_dir)
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    opt = _Options(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = opt.seed()
    delimiter = opt.get("delimiter", None)

    if args.sbm_spec:
        spec = synth.load_sbm_spec(args.sbm_spec)
        if args.seed is not None or os.environ.get("GRAPHFOLK_SEED") is not None:
            spec.seed = module_seed(seed, "synth")
        raw_edges, labels = synth.generate_sbm(spec)
        labels_path = out_dir / "labels.csv"
        graph.save_edge_list(raw_edges, out_dir / "edges.txt")
        predict.save_labels([(l.id, l.occ_class, l.income) for l in labels], labels_path)
    elif args.edges and args.labels:
        raw_edges = graph.load_edge_list(args.edges, delimiter)
        labels_path = Path(args.labels)
    else:
        raise ValueError("pipeline needs --sbm-spec or both --edges and --labels")

    keep = graph.load_id_file(args.keep) if args.keep else ()
    pruned = graph.prune_by_in_degree(raw_edges, opt.get("min-in-degree", 0, int), keep)
    graph.save_edge_list(pruned, out_dir / "pruned.txt")

    g = graph.build_undirected(pruned)
    corpus = walks.generate_corpus(g, _walk_config(opt))
    walks.save_corpus(corpus, out_dir / "walks.txt")

    model = sgns.train(corpus, _sgns_config(opt), threads=opt.get("threads", 1, int))
    embedding_path = out_dir / "embedding.txt"
    sgns.export_embedding(model, embedding_path)

    if args.task == "both":
        # only evaluate tasks the label file actually covers
        label_map = predict.load_labels(labels_path)
        tasks = []
        if any(occ is not None for occ, _ in label_map.values()):
            tasks.append("occ")
        if any(inc is not None for _, inc in label_map.values()):
            tasks.append("income")
    else:
        tasks = [args.task]
    for task in tasks:
        _run_eval(
            task, str(embedding_path), str(labels_path), args.extra_features,
            None, str(out_dir / f"report_{task}"), seed,
        )
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as err:
        print(f"graphfolk {args.command}: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
