"""Command-line entry point: ``hetrag index|query|eval|judge|elo|inspect``.

Exit status is 0 on success, 1 on runtime failure and 2 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import EngineConfig, load_config
from .errors import ConfigError, CorpusReadError, HetragError, TransportError
from .evaluation import (
    DIMENSIONS,
    Comparison,
    PairwiseVerdict,
    QAPair,
    aggregate_winrates,
    format_matrix,
    judge_pairwise,
    score_items,
)
from .indexer import build_index
from .ingest import load_corpus
from .loop import run_macer
from .storage import load_index, read_manifest, save_index

log = logging.getLogger("hetrag")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(HetragError):
    pass


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def _write_jsonl(path: str | Path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(_dumps(rec) + "\n")


def _read_jsonl(path: str | Path, what: str) -> list[dict]:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file not found: {p}")
    out = []
    with p.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except ValueError as exc:
                raise HetragError(f"{p}:{lineno}: invalid JSON ({exc})") from None
            if not isinstance(rec, dict):
                raise HetragError(f"{p}:{lineno}: expected a JSON object")
            out.append(rec)
    return out


def _config(args, **overrides) -> EngineConfig:
    return load_config(args.config, script=args.script, seed=args.seed, **overrides)


def _index_dir(path: str | None) -> Path:
    if not path:
        raise UsageError("no index path given (argument or index_path in config)")
    p = Path(path)
    if not (p / "manifest").is_file():
        raise UsageError(f"no index at {p}")
    return p


# ---- commands -------------------------------------------------------------

def cmd_index(args) -> int:
    cfg = _config(args, workers=args.workers, chunk_size=args.chunk_size, overlap=args.overlap)
    corpus_path = Path(args.corpus)
    if not corpus_path.exists():
        raise UsageError(f"corpus not found: {corpus_path}")
    out = args.out or cfg.index_path
    if not out:
        raise UsageError("no output directory (--out or index_path in config)")
    docs = load_corpus(corpus_path)
    backend = cfg.make_backend()
    g, report = build_index(docs, backend, cfg.index_config())
    summary = report.to_dict()
    # worker count does not change the index, so keep it out of the manifest
    summary["config"].pop("workers", None)
    save_index(g, out, build=summary)
    print(_dumps({"index": str(out), **{k: summary[k] for k in sorted(summary) if k != "config"}}))
    return EXIT_OK


def _questions(args) -> list[tuple[str | None, str]]:
    if args.questions:
        recs = _read_jsonl(args.questions, "questions")
        return [(str(r.get("id", i)), str(r["question"])) for i, r in enumerate(recs)]
    if not args.question:
        raise UsageError("give a question or --questions FILE")
    return [(None, args.question)]


def cmd_query(args) -> int:
    cfg = _config(args, top_k=args.top_k, horizon=args.max_rounds)
    index = _index_dir(args.index or cfg.index_path)
    questions = _questions(args)
    g = load_index(index)
    backend = cfg.make_backend()
    macer = cfg.macer_config(always_synthesize=args.always_synthesize)
    audit: list[dict] = []
    predictions = []
    status = EXIT_OK
    try:
        for qid, q in questions:
            try:
                answer, traj = run_macer(q, g, macer, backend)
            except TransportError as exc:
                partial = getattr(exc, "trajectory", None)
                if partial is not None:
                    audit.extend(_tag(partial.audit_records(), qid))
                raise
            audit.extend(_tag(traj.audit_records(), qid))
            predictions.append({"id": qid, "question": q, "prediction": answer})
            if qid is None:
                print(answer)
            else:
                print(f"{qid}\t{answer}")
    except TransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_RUNTIME
    finally:
        if args.audit:
            _write_jsonl(args.audit, audit)
        if args.out:
            _write_jsonl(args.out, predictions)
    return status


def _tag(records: list[dict], qid: str | None) -> list[dict]:
    if qid is None:
        return records
    return [{**r, "qid": qid} for r in records]


def _by_id(recs: list[dict], path: str) -> dict[str, dict]:
    out: dict[str, dict] = {}
    for r in recs:
        if "id" not in r:
            raise HetragError(f"{path}: record without an 'id' field")
        key = str(r["id"])
        if key in out:
            raise HetragError(f"{path}: duplicate id {key!r}")
        out[key] = r
    return out


def cmd_eval(args) -> int:
    preds = _by_id(_read_jsonl(args.predictions, "predictions"), args.predictions)
    golds = _by_id(_read_jsonl(args.gold, "gold"), args.gold)
    missing = sorted(set(golds) - set(preds))
    extra = sorted(set(preds) - set(golds))
    if missing or extra:
        if missing:
            print("ids without a prediction: " + ", ".join(missing), file=sys.stderr)
        if extra:
            print("ids without a gold answer: " + ", ".join(extra), file=sys.stderr)
        return EXIT_RUNTIME
    items = []
    for key in sorted(golds):
        gold = golds[key]
        answers = gold.get("answers", gold.get("answer"))
        if isinstance(answers, str):
            answers = [answers]
        if not answers:
            raise HetragError(f"{args.gold}: id {key!r} has no gold answers")
        items.append(QAPair(str(gold.get("question", "")), tuple(map(str, answers)), str(preds[key].get("prediction", "")), key))
    scores, summary = score_items(items)
    records = [{"type": "item", "id": s.qid, "em": s.em, "f1": s.f1, "precision": s.precision, "recall": s.recall} for s in scores]
    records.append({"type": "summary", **summary})
    if args.out:
        _write_jsonl(args.out, records)
    print(f"{'count':<10}{summary['count']}")
    for name in ("em", "f1", "precision", "recall"):
        print(f"{name:<10}{summary[name]:.4f}")
    return EXIT_OK


def _parse_labeled(arg: str) -> tuple[str, str]:
    name, sep, path = arg.partition("=")
    if not sep or not name or not path:
        raise UsageError(f"expected NAME=FILE, got {arg!r}")
    return name, path


def cmd_judge(args) -> int:
    cfg = _config(args)
    name_a, path_a = _parse_labeled(args.a)
    name_b, path_b = _parse_labeled(args.b)
    if name_a == name_b:
        raise UsageError("the two methods need distinct names")
    a = _by_id(_read_jsonl(path_a, name_a), path_a)
    b = _by_id(_read_jsonl(path_b, name_b), path_b)
    shared = sorted(set(a) & set(b))
    if not shared:
        raise HetragError("the two answer files share no ids")
    backend = cfg.make_judge_backend()
    records = []
    for key in shared:
        question = str(a[key].get("question") or b[key].get("question") or "")
        verdict = judge_pairwise(question, str(a[key]["prediction"]), str(b[key]["prediction"]), backend)
        records.append({
            "id": key,
            "question": question,
            "method_a": name_a,
            "method_b": name_b,
            "valid": verdict.valid,
            "winners": verdict.winners,
            "invalid_reason": verdict.invalid_reason,
        })
    _write_jsonl(args.out, records)
    invalid = sum(not r["valid"] for r in records)
    print(f"{len(records)} comparisons, {invalid} invalid -> {args.out}")
    return EXIT_OK


def cmd_elo(args) -> int:
    comparisons = []
    for path in args.results:
        for rec in _read_jsonl(path, "results"):
            verdict = PairwiseVerdict(rec.get("winners") or {}, {}, "" if rec.get("valid") else rec.get("invalid_reason") or "invalid")
            if verdict.valid and set(verdict.winners) != set(DIMENSIONS):
                raise HetragError(f"{path}: record {rec.get('id')!r} lacks a winner for every dimension")
            comparisons.append(Comparison(rec["method_a"], rec["method_b"], verdict, str(rec.get("question", ""))))
    if not comparisons:
        raise UsageError("no comparisons in the given results files")
    report = aggregate_winrates(comparisons, args.reference, args.dimension)
    print(format_matrix(report, args.dimension))
    print()
    print(f"{'method':<20}rating")
    for m in report.methods:
        r = report.elo.ratings.get(m)
        print(f"{m:<20}{'saturated' if r is None else f'{r:.2f}'}")
    print(f"\n{report.valid} valid, {report.invalid} invalid comparisons")
    if args.out:
        recs = [{"type": "matrix", "dimension": d, "methods": report.methods, "rows": report.matrix[d]} for d in DIMENSIONS]
        recs.append({"type": "elo", "reference": report.elo.reference, "ratings": report.elo.ratings,
                     "saturated": report.elo.saturated, "valid": report.valid, "invalid": report.invalid})
        _write_jsonl(args.out, recs)
    return EXIT_OK


def cmd_inspect(args) -> int:
    cfg = _config(args)
    index = _index_dir(args.index or cfg.index_path)
    manifest = read_manifest(index)
    g = load_index(index)
    print(_dumps({"counts": g.counts(), "dim": g.dim, "build": manifest.get("build")}))
    n = args.samples
    for label, table in (("chunk", g.chunks), ("entity", g.entities), ("triplet", g.triplets), ("community", g.communities)):
        for nid in sorted(table)[:n]:
            rec = table[nid]
            if label == "chunk":
                detail = rec.text[:80].replace("\n", " ")
            elif label == "entity":
                detail = f"{rec.name} ({rec.entity_type})" if rec.entity_type else rec.name
            elif label == "triplet":
                detail = rec.line()
            else:
                detail = f"level {rec.level}, {len(rec.members)} members: {rec.summary[:60]}"
            print(f"{label:<10}{nid}  {detail}")
    for e in sorted(g.edges)[:n]:
        print(f"{'edge':<10}{e.kind} {e.source} -> {e.target}")
    return EXIT_OK


# ---- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML engine config")
    common.add_argument("--script", help="script file for the scripted backend (overrides config)")
    common.add_argument("--seed", type=int, help="RNG and embedding seed (overrides config)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="hetrag", description="Graph-indexed retrieval with an evolving query loop.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", parents=[common], help="build an index from a corpus")
    p.add_argument("corpus", help="directory of .txt files or a JSONL file with id/title/text")
    p.add_argument("--out", help="index directory to write")
    p.add_argument("--workers", type=int, help="parallel LLM calls (default: logical cores)")
    p.add_argument("--chunk-size", type=int, dest="chunk_size")
    p.add_argument("--overlap", type=int)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", parents=[common], help="answer questions against an index")
    p.add_argument("index", nargs="?", help="index directory (default: index_path from config)")
    p.add_argument("question", nargs="?")
    p.add_argument("--questions", help="JSONL file with id and question fields")
    p.add_argument("--out", help="write predictions as JSONL (id, question, prediction)")
    p.add_argument("--audit", help="write the trajectory audit log as JSONL")
    p.add_argument("--always-synthesize", action="store_true", help="run final synthesis even after a sufficient answer")
    p.add_argument("--max-rounds", type=int, help="loop horizon (overrides config)")
    p.add_argument("--top-k", type=int, dest="top_k")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", parents=[common], help="score predictions with EM/F1/P/R")
    p.add_argument("predictions", help="JSONL with id and prediction")
    p.add_argument("gold", help="JSONL with id, question and answers")
    p.add_argument("--out", help="write per-item scores and the summary as JSONL")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("judge", parents=[common], help="pairwise-judge two answer files")
    p.add_argument("--a", required=True, metavar="NAME=FILE", help="first method's predictions")
    p.add_argument("--b", required=True, metavar="NAME=FILE", help="second method's predictions")
    p.add_argument("--out", required=True, help="comparison results JSONL")
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("elo", parents=[common], help="win-rate matrix and ELO ratings from judge results")
    p.add_argument("results", nargs="+", help="comparison results JSONL files")
    p.add_argument("--reference", required=True, help="method pinned at rating 1600")
    p.add_argument("--dimension", default="Overall Winner", choices=DIMENSIONS)
    p.add_argument("--out", help="write matrices and ratings as JSONL")
    p.set_defaults(func=cmd_elo)

    p = sub.add_parser("inspect", parents=[common], help="print counts and sample records of an index")
    p.add_argument("index", nargs="?")
    p.add_argument("--samples", type=int, default=3)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HetragError, CorpusReadError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
