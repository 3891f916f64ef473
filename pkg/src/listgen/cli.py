"""Command line entry point: ``listgen <subcommand> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .config import ExperimentConfig, load_config
from .data import DatasetBundle, load_bundle, make_synthetic_dataset, read_corpus, attach_embeddings
from .decoding import write_run
from .docids import DocidError, build_trie, read_docid_map, write_docid_map
from .metrics import DEFAULT_METRICS, evaluate_run, format_per_query, format_report, read_qrels, read_run
from .model import ScorerModel
from .training import build_docids, retrain, retrieve, train_stage_one

logger = logging.getLogger("listgen")


class CliError(Exception):
    pass


def _config(args) -> ExperimentConfig:
    overrides = {"seed": args.seed}
    for key in ("variant", "steps", "retrain_steps", "beam_width", "k"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    return load_config(args.config, **overrides)


def _bundle(args, config: ExperimentConfig) -> DatasetBundle:
    d = Path(args.data) if args.data else None

    def pick(explicit, name, required=True):
        if explicit:
            return explicit
        if d is not None and (d / name).exists():
            return d / name
        if required:
            raise CliError(f"missing input {name} (pass --data or the explicit flag)")
        return None

    return load_bundle(
        corpus=pick(args.corpus, "corpus.jsonl"),
        qrels=pick(args.qrels, "qrels.txt"),
        queries=pick(args.queries, "queries.tsv"),
        pseudo_queries=pick(args.pseudo_queries, "pseudo_queries.tsv", required=False),
        embeddings=pick(args.embeddings, "embeddings.tsv", required=False),
        split=pick(args.split, "split.tsv", required=False),
        test_fraction=config.test_fraction,
        seed=config.seed,
    )


def _docids(args, bundle: DatasetBundle):
    docid_map = read_docid_map(args.docids)
    missing = [d.internal_id for d in bundle.documents if d.internal_id not in docid_map]
    if missing:
        raise CliError(f"document {missing[0]!r} has no docid in {args.docids}")
    return docid_map


def _load_model(path) -> ScorerModel:
    if not (Path(path) / "manifest.txt").exists():
        raise CliError(f"checkpoint not found: {path}")
    return ScorerModel.load(path)


def _write_trace(path: Path, trace: List[float]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for step, value in enumerate(trace, 1):
            f.write(f"{step}\t{value:.6f}\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_make_synthetic(args) -> None:
    grades = [int(g) for g in args.grades.split(",")]
    bundle = make_synthetic_dataset(args.n_docs, args.n_queries, grades, seed=args.seed if args.seed is not None else 7)
    paths = bundle.write(args.out)
    print(f"wrote {len(bundle.documents)} documents and {len(bundle.queries)} queries to {paths['corpus'].parent}")


def cmd_build_docids(args) -> None:
    config = _config(args)
    if args.data and not args.corpus:
        args.corpus = Path(args.data) / "corpus.jsonl"
    if not args.corpus:
        raise CliError("missing --corpus")
    documents = read_corpus(args.corpus)
    if args.embeddings:
        attach_embeddings(documents, args.embeddings)
    bundle = DatasetBundle(documents, {}, {}, [], [])
    docid_map = build_docids(bundle, config)
    trie = build_trie(docid_map)
    if len(set(docid_map.values())) != len(docid_map):
        raise CliError("docid assignment is not injective")
    write_docid_map(args.out, docid_map)
    width = len(str(config.leaf_max - 1))
    print(f"documents\t{len(docid_map)}\nmax_depth\t{trie.depth - 1}\nleaf_width\t{width}")


def cmd_train(args) -> None:
    config = _config(args)
    bundle = _bundle(args, config)
    docid_map = _docids(args, bundle)
    model, trace = train_stage_one(bundle, docid_map, config)
    out = Path(args.out)
    model.save(out)
    _write_trace(out / "loss.tsv", trace)
    print(f"trained {config.variant} for {config.steps} steps; final loss {trace[-1] if trace else 0.0:.4f}")


def cmd_retrain(args) -> None:
    config = _config(args)
    bundle = _bundle(args, config)
    docid_map = _docids(args, bundle)
    model = _load_model(args.checkpoint)
    new, trace = retrain(model, bundle, docid_map, build_trie(docid_map), config)
    out = Path(args.out)
    new.save(out)
    _write_trace(out / "loss.tsv", trace)
    print(f"re-trained for {len(trace)} steps")


def cmd_retrieve(args) -> None:
    config = _config(args)
    bundle = _bundle(args, config)
    docid_map = _docids(args, bundle)
    model = _load_model(args.checkpoint)
    if args.qids:
        qids = [q for q in args.qids.split(",") if q]
    else:
        qids = bundle.train_qids if args.split_role == "train" else bundle.test_qids
    unknown = [q for q in qids if q not in bundle.queries]
    if unknown:
        raise CliError(f"unknown query id {unknown[0]!r}")
    trie = build_trie(docid_map)
    runs, sec = retrieve(model, bundle, qids, trie, config)
    write_run(args.out, runs, trie)
    print(f"decoded {len(qids)} queries, {1000 * sec:.2f} ms/query")


def cmd_evaluate(args) -> None:
    config = _config(args)
    qrels = read_qrels(args.qrels)
    runs = read_run(args.run)
    known = {d for judg in qrels.values() for d in judg}
    if args.data:
        known |= {d.internal_id for d in read_corpus(Path(args.data) / "corpus.jsonl")}
        unknown = sorted({d for r in runs.values() for d in r} - known)
        if unknown:
            logger.warning("run references %d unknown documents (e.g. %s); counted as non-relevant",
                           len(unknown), unknown[0])
    metrics = args.metrics.split(",") if args.metrics else list(DEFAULT_METRICS)
    qids = None
    if args.qids:
        qids = [q for q in args.qids.split(",") if q]
    elif args.all_judged is False:
        qids = sorted(runs)
    means, per_query = evaluate_run(runs, qrels, metrics, config.g_max, qids)
    report = format_report(means)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.tsv").write_text(report, encoding="utf-8")
        (out / "per_query.jsonl").write_text(format_per_query(per_query), encoding="utf-8")
    sys.stdout.write(report)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, out_help: str) -> None:
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--seed", type=int, help="overrides the configured seed")
    p.add_argument("--out", required=True, help=out_help)


def _data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="directory holding corpus.jsonl, queries.tsv, qrels.txt, ...")
    p.add_argument("--corpus")
    p.add_argument("--queries")
    p.add_argument("--qrels")
    p.add_argument("--pseudo-queries", dest="pseudo_queries")
    p.add_argument("--embeddings")
    p.add_argument("--split", help="qid<TAB>train|test file")
    p.add_argument("--docids", required=True, help="docid map written by build-docids")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="listgen", description="Listwise generative retrieval toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-synthetic", help="write the seeded synthetic topic dataset")
    _common(p, "output directory")
    p.add_argument("--n-docs", type=int, default=200)
    p.add_argument("--n-queries", type=int, default=60)
    p.add_argument("--grades", default="0,1,2,3")
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("build-docids", help="assign hierarchical k-means docids")
    _common(p, "docid map file")
    p.add_argument("--data")
    p.add_argument("--corpus")
    p.add_argument("--embeddings")
    p.set_defaults(func=cmd_build_docids)

    p = sub.add_parser("train", help="stage-one training")
    _common(p, "checkpoint directory")
    _data_flags(p)
    p.add_argument("--variant", choices=["listgr", "listmle", "pointwise"])
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("retrain", help="relevance-calibration re-training")
    _common(p, "checkpoint directory")
    _data_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--retrain-steps", dest="retrain_steps", type=int)
    p.set_defaults(func=cmd_retrain)

    p = sub.add_parser("retrieve", help="decode queries into a TREC run file")
    _common(p, "run file")
    _data_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--qids", help="comma-separated query ids (default: the test split)")
    p.add_argument("--split-role", choices=["train", "test"], default="test")
    p.add_argument("--beam-width", dest="beam_width", type=int)
    p.add_argument("-k", type=int)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("evaluate", help="score a run file against qrels")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="directory for report.tsv and per_query.jsonl")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--data", help="dataset directory, used to flag unknown documents")
    p.add_argument("--metrics", help=f"comma-separated (default {','.join(DEFAULT_METRICS)})")
    p.add_argument("--qids", help="comma-separated query ids to average over")
    p.add_argument("--all-judged", action="store_true",
                   help="average over every judged query instead of the queries in the run")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CliError, DocidError, ValueError, OSError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"listgen {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
