"""Command line interface.

Subcommands: synth, stats, train, predict, eval, export-check. Every
run that writes files also writes a manifest recording the command,
its arguments, the package version, and the produced paths. Outputs
are computed fully before anything is written, so a failing run leaves
no partial output behind.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .corpus import CorpusStats, corpus_stats, dump_json, load_corpus, load_document, save_document
from .discourse import RstNode, load_rst, save_rst
from .encoder import average_subtokens, load_store, save_store, synthetic_embeddings
from .errors import CorpusFormatError, DiscorefError
from .evalmetrics import lea
from .synth import SynthConfig, generate_synthetic_corpus
from .training import (
    TrainConfig, decode_config, load_checkpoint, predict, save_checkpoint, train,
)

log = logging.getLogger(__name__)


@dataclass
class RunManifest:
    command: str
    arguments: dict
    package_version: str
    outputs: list[str]

    def write(self, path: Path) -> None:
        dump_json({
            "command": self.command,
            "arguments": self.arguments,
            "package_version": self.package_version,
            "outputs": self.outputs,
        }, path)


def _manifest(args: argparse.Namespace, outputs: list[Path], directory: Path) -> None:
    arguments = {k: (str(v) if isinstance(v, Path) else v)
                 for k, v in vars(args).items() if k != "func"}
    manifest = RunManifest(
        command=args.command,
        arguments=arguments,
        package_version=__version__,
        outputs=[str(p) for p in outputs],
    )
    manifest.write(directory / "manifest.json")


def _parse_features(text: str) -> tuple[str, ...]:
    if not text:
        return ()
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _load_trees_dir(directory: Path, doc_ids: list[str]) -> dict[str, list[RstNode]]:
    trees = {}
    for doc_id in doc_ids:
        path = directory / f"{doc_id}.json"
        if path.exists():
            trees[doc_id] = load_rst(path)
    return trees


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = SynthConfig(
        mode=args.mode,
        n_entities=args.entities,
        mentions_per_entity=args.mentions,
        n_paragraphs=args.paragraphs,
        pronoun_rate=args.pronoun_rate,
    )
    generated = generate_synthetic_corpus(args.seed, args.docs, cfg)
    out = Path(args.out)
    corpus_dir = out / "corpus"
    trees_dir = out / "trees"
    corpus_dir.mkdir(parents=True, exist_ok=True)
    trees_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for doc, trees in generated:
        doc_path = corpus_dir / f"{doc.id}.json"
        save_document(doc, doc_path)
        tree_path = trees_dir / f"{doc.id}.json"
        save_rst(doc.id, trees, tree_path)
        outputs.extend([doc_path, tree_path])
    store = synthetic_embeddings([doc for doc, _ in generated], args.embed_dim, args.seed)
    store_path = out / "embeddings.chde"
    save_store(store, store_path)
    outputs.append(store_path)
    _manifest(args, outputs, out)
    print(f"wrote {len(generated)} documents to {out}")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    docs = load_corpus(args.corpus)
    stats = corpus_stats(docs, length_cap=args.cap)
    print(stats.format_table())
    if args.json:
        dump_json(stats.to_json(), args.json)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = TrainConfig(
        features=_parse_features(args.features),
        max_span_length=args.lmax,
        span_ratio=args.span_ratio,
        max_antecedents=args.topk_antecedents,
        compress_dim=args.compress_dim,
        feature_dim=args.feature_dim,
        hidden_dim=args.hidden_dim,
        learning_rate=args.lr,
        epochs=args.epochs,
        dropout=args.dropout,
        clip_norm=args.clip_norm,
        validation_fraction=args.val_fraction,
        seed=args.seed,
        debug_grad_checks=args.debug_grad_checks,
    )
    docs = load_corpus(args.corpus)
    store = load_store(args.embeddings)
    trees = _load_trees_dir(Path(args.trees), [d.id for d in docs]) if args.trees else None
    result = train(docs, store, trees, cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / "checkpoint.chdm"
    save_checkpoint(result, ckpt_path)
    metrics_path = out / "metrics.jsonl"
    lines = [json.dumps(record, sort_keys=True) for record in result.log]
    metrics_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _manifest(args, [ckpt_path, metrics_path], out)
    print(f"best epoch {result.best_epoch} with held-out F1 {result.best_val_f1:.4f}")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    model, config = load_checkpoint(args.checkpoint)
    cfg = decode_config(config)
    docs = load_corpus(args.corpus)
    store = load_store(args.embeddings)
    trees = _load_trees_dir(Path(args.trees), [d.id for d in docs]) if args.trees else None
    predictions = predict(model, docs, store, trees, cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    by_id = {d.id: d for d in docs}
    for pred in predictions:
        path = out / f"{pred.doc_id}.json"
        dump_json(pred.to_dict(by_id[pred.doc_id]), path)
        outputs.append(path)
    _manifest(args, outputs, out)
    print(f"wrote {len(predictions)} prediction files to {out}")
    return 0


def _load_cluster_file(path: Path) -> tuple[str, list[set]]:
    """Accept either gold corpus files ("entities") or prediction files
    ("clusters"); mentions become hashable character-span tuples."""
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"{path}: invalid JSON at byte {exc.pos}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise CorpusFormatError(f"{path}: expected a JSON object")
    doc_id = data.get("id") or path.stem
    raw = data.get("clusters", data.get("entities", []))
    clusters = []
    for cluster in raw:
        try:
            clusters.append({(int(s), int(e)) for s, e in cluster})
        except (TypeError, ValueError) as exc:
            raise CorpusFormatError(f"{path}: clusters must contain [start, end] pairs") from exc
    return doc_id, clusters


def _load_cluster_dir(directory: Path) -> dict[str, list[set]]:
    paths = sorted(Path(directory).glob("*.json"))
    paths = [p for p in paths if p.name != "manifest.json"]
    if not paths:
        raise CorpusFormatError(f"{directory}: no *.json files found")
    out = {}
    for path in paths:
        doc_id, clusters = _load_cluster_file(path)
        if doc_id in out:
            raise CorpusFormatError(f"{directory}: duplicate document id {doc_id!r}")
        out[doc_id] = clusters
    return out


def cmd_eval(args: argparse.Namespace) -> int:
    key = _load_cluster_dir(Path(args.key))
    response = _load_cluster_dir(Path(args.response))
    unknown = sorted(set(response) - set(key))
    if unknown:
        raise CorpusFormatError(f"response contains unknown document ids: {unknown[:10]}")
    missing = sorted(set(key) - set(response))
    if missing:
        log.warning("response lacks %d documents (counted as empty): %s", len(missing), missing[:10])
    score = lea(key, response)
    print(f"LEA precision {score.precision:.4f} recall {score.recall:.4f} f1 {score.f1:.4f}")
    if args.json:
        dump_json({
            "precision": score.precision,
            "recall": score.recall,
            "f1": score.f1,
            "documents": len(key),
        }, args.json)
    return 0


def cmd_export_check(args: argparse.Namespace) -> int:
    store = load_store(args.store)
    issues = []
    if args.corpus:
        docs = load_corpus(args.corpus)
        for doc in docs:
            if doc.id not in store:
                issues.append(f"{doc.id}: missing from the store")
                continue
            paragraphs = store.docs[doc.id]
            if len(paragraphs) != len(doc.paragraph_bounds):
                issues.append(f"{doc.id}: {len(paragraphs)} paragraph matrices for "
                              f"{len(doc.paragraph_bounds)} paragraphs")
                continue
            try:
                average_subtokens(store, doc)
            except DiscorefError as exc:
                issues.append(f"{doc.id}: {exc}")
    for issue in issues:
        print(f"problem: {issue}")
    if issues:
        return 1
    print(f"store OK: {len(store.docs)} documents, width {store.d_lm}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="discoref", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus with trees and embeddings")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--docs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("names", "rhetorical"), default="names")
    p.add_argument("--entities", type=int, default=3)
    p.add_argument("--mentions", type=int, default=4)
    p.add_argument("--paragraphs", type=int, default=3)
    p.add_argument("--pronoun-rate", type=float, default=0.3)
    p.add_argument("--embed-dim", type=int, default=64)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="print corpus statistics")
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--cap", type=int, default=13)
    p.add_argument("--json", type=Path)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--embeddings", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--trees", type=Path)
    p.add_argument("--features", default="", help="comma list from lin,rh,lca")
    p.add_argument("--lmax", type=int, default=13)
    p.add_argument("--lambda", dest="span_ratio", type=float, default=0.4)
    p.add_argument("--topk-antecedents", type=int, default=50)
    p.add_argument("--compress-dim", type=int, default=100)
    p.add_argument("--feature-dim", type=int, default=20)
    p.add_argument("--hidden-dim", type=int, default=150)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--clip-norm", type=float, default=5.0)
    p.add_argument("--val-fraction", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--debug-grad-checks", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="decode clusters with a trained checkpoint")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--embeddings", required=True, type=Path)
    p.add_argument("--trees", type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against gold clusters")
    p.add_argument("--key", required=True, type=Path)
    p.add_argument("--response", required=True, type=Path)
    p.add_argument("--json", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-check", help="validate an embedding store file")
    p.add_argument("--store", required=True, type=Path)
    p.add_argument("--corpus", type=Path)
    p.set_defaults(func=cmd_export_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DiscorefError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
