"""Command-line interface.

Pipeline commands: ingest -> filter -> stats -> index -> retrieve ->
experiment -> report, plus the tokenize/evaluate utilities and the one-shot
developer-facing suggest command.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import corpus as corpus_mod
from . import harness, metrics
from .augmenter import DEFAULT_MAX_PROMPT_CHARS, PromptTemplate, build_rag_prompt
from .diffs import read_jsonl, write_jsonl
from .errors import CoracmgError
from .providers import EmbeddingClient, GenerationClient, HashingEmbedder, ProviderConfig
from .retriever import RetrievalIndex
from .tokenizer import tokenize


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coracmg")
    sub = parser.add_subparsers(dest="command", required=True)

    ingest = sub.add_parser("ingest", help="mine commit records from a git clone")
    ingest.add_argument("--repo", required=True, help="path to a local git repository")
    ingest.add_argument("--branch", required=True)
    ingest.add_argument("--since", required=True, help="cutoff date, e.g. 2015-01-01")
    ingest.add_argument("--out", required=True)
    ingest.add_argument("--repo-name", help="override the owner/name detected from origin")

    filt = sub.add_parser("filter", help="preprocess messages and apply filters R1-R5")
    filt.add_argument("--in", dest="input", required=True)
    filt.add_argument("--out", required=True)
    filt.add_argument("--report", required=True)
    filt.add_argument("--max-diff-lines", type=int, default=300)
    filt.add_argument(
        "--r2-mode",
        choices=["raw", "changed"],
        default="raw",
        help="count raw diff lines (default) or only added+deleted lines",
    )

    stats = sub.add_parser("stats", help="token-length and change-size statistics")
    stats.add_argument("--in", dest="input", required=True)

    tok = sub.add_parser("tokenize", help="print enhanced-tokenizer output")
    tok.add_argument("--text", required=True)
    tok.add_argument("--drop-symbol-tokens", action="store_true")

    ev = sub.add_parser("evaluate", help="score hypotheses against references")
    ev.add_argument("--hyp", required=True, help="jsonl with a 'message' or 'generated' field")
    ev.add_argument("--ref", required=True, help="jsonl with a 'message' field")
    ev.add_argument("--out", required=True)
    ev.add_argument("--cider-scale", type=float, default=100.0)

    idx = sub.add_parser("index", help="build the hybrid retrieval index")
    idx.add_argument("--in", dest="input", required=True)
    idx.add_argument("--out", required=True)
    idx.add_argument("--embedder", choices=["hash", "provider"], default="hash")
    idx.add_argument("--embed-endpoint", default="")
    idx.add_argument("--embed-model", default="")
    idx.add_argument("--dimension", type=int, default=256)
    idx.add_argument("--cache-dir", default=None)

    ret = sub.add_parser("retrieve", help="query the index for example pairs")
    ret.add_argument("--index", required=True)
    ret.add_argument("--query-diff", required=True, help="file containing the query diff")
    ret.add_argument("--repo", required=True)
    ret.add_argument("-k", type=int, default=3)
    ret.add_argument("--exclude-sha", default=None)
    ret.add_argument("--show-diff", action="store_true")
    ret.add_argument(
        "--provider-config",
        default=None,
        help="required when the index was built with a provider embedder",
    )

    exp = sub.add_parser("experiment", help="run a full experiment from a config file")
    exp.add_argument("--config", required=True)
    exp.add_argument(
        "--sweep-k",
        default=None,
        help="comma-separated k values; runs the rag method once per k",
    )

    sug = sub.add_parser("suggest", help="one-shot commit message suggestion")
    sug.add_argument("--repo", required=True)
    sug.add_argument("--diff", required=True, help="file containing the diff to describe")
    sug.add_argument("-k", type=int, default=1)
    sug.add_argument("--branch", default="HEAD")
    sug.add_argument("--since", default="1970-01-01")
    sug.add_argument("--provider-config", default=None, help="use a generation provider")
    sug.add_argument("--template", default=None)
    sug.add_argument("--max-prompt-chars", type=int, default=DEFAULT_MAX_PROMPT_CHARS)
    sug.add_argument("--verbose", action="store_true")

    rep = sub.add_parser("report", help="comparison table across experiment runs")
    rep.add_argument("--in", dest="input", required=True)
    rep.add_argument("--out", required=True)

    return parser


def _cmd_ingest(args) -> int:
    records = corpus_mod.ingest_repo(
        args.repo, args.branch, args.since, repo_name=args.repo_name
    )
    count = write_jsonl(args.out, records)
    print(f"wrote {count} commit records to {args.out}")
    return 0


def _cmd_filter(args) -> int:
    records = [
        replace(rec, message=corpus_mod.preprocess_message(rec.message))
        for rec in read_jsonl(args.input)
    ]
    retained, report = corpus_mod.apply_filters(
        records, max_diff_lines=args.max_diff_lines, line_mode=args.r2_mode
    )
    write_jsonl(args.out, retained)
    Path(args.report).write_text(
        json.dumps(report.to_dict(), indent=2), encoding="utf-8"
    )
    print(
        f"retained {report.retained_count}/{report.input_count}; "
        + ", ".join(f"{r}={report.rejections[r]}" for r in corpus_mod.RULES)
    )
    return 0


def _cmd_stats(args) -> int:
    stats = corpus_mod.compute_stats(read_jsonl(args.input))
    print(json.dumps(stats.to_dict(), indent=2))
    return 0


def _cmd_tokenize(args) -> int:
    print(" ".join(tokenize(args.text, drop_symbol_tokens=args.drop_symbol_tokens)))
    return 0


def _read_messages(path: str, keys: tuple[str, ...]) -> list[str]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            for key in keys:
                if key in obj and obj[key] is not None:
                    out.append(obj[key])
                    break
            else:
                raise ValueError(f"line in {path} has none of the keys {keys}")
    return out


def _cmd_evaluate(args) -> int:
    hyps = _read_messages(args.hyp, ("message", "generated"))
    refs = _read_messages(args.ref, ("message", "reference"))
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    report = metrics.evaluate_corpus(list(zip(hyps, refs)), cider_scale=args.cider_scale)
    Path(args.out).write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    print(
        f"bleu={report.bleu:.2f} rouge_l={report.rouge_l:.2f} "
        f"meteor={report.meteor:.2f} cider={report.cider:.2f}"
    )
    return 0


def _cmd_index(args) -> int:
    if args.embedder == "provider":
        if not args.embed_endpoint:
            raise ValueError("--embed-endpoint is required with --embedder provider")
        embedder = EmbeddingClient(
            args.embed_endpoint,
            args.dimension,
            model=args.embed_model,
            cache_dir=args.cache_dir,
        )
    else:
        embedder = HashingEmbedder(args.dimension)
    index = RetrievalIndex.build(read_jsonl(args.input), embedder)
    index.save(args.out)
    total = sum(len(p) for p in index.partitions.values())
    print(f"indexed {total} documents across {len(index.partitions)} projects into {args.out}")
    return 0


def _cmd_retrieve(args) -> int:
    index = RetrievalIndex.load(args.index)
    # The query must be embedded the same way the index was built.
    if index.embedder_id.startswith("hash-"):
        embedder = HashingEmbedder(index.dimension)
    elif args.provider_config:
        pc = ProviderConfig.from_file(args.provider_config)
        embedder = EmbeddingClient(
            pc.embed_endpoint, index.dimension, model=pc.embed_model, inflight=pc.inflight
        )
    else:
        raise ValueError(
            f"index was built with embedder {index.embedder_id!r}; pass --provider-config"
        )
    query = Path(args.query_diff).read_text(encoding="utf-8")
    pairs = index.retrieve(
        query, args.k, args.repo, exclude_sha=args.exclude_sha, embedder=embedder
    )
    out = []
    for pair in pairs:
        item = {
            "sha": pair.handle.sha,
            "repo_full_name": pair.handle.repo_full_name,
            "hybrid_score": pair.hybrid_score,
            "message": pair.message,
        }
        if args.show_diff:
            item["diff"] = pair.diff
        out.append(item)
    print(json.dumps(out, indent=2, ensure_ascii=False))
    return 0


def _cmd_experiment(args) -> int:
    config = harness.ExperimentConfig.from_file(args.config)
    if args.sweep_k:
        ks = [int(v) for v in args.sweep_k.split(",")]
        results = harness.run_k_sweep(config, ks)
        table = harness.render_report(results)
        out = Path(config.out_dir) / "report.md"
        out.write_text(table, encoding="utf-8")
        print(f"ran k sweep over {ks}; report at {out}")
        return 0
    result = harness.run_experiment(config)
    m = result.manifest["metrics"]
    print(
        f"{result.label}: bleu={m['bleu']:.2f} rouge_l={m['rouge_l']:.2f} "
        f"meteor={m['meteor']:.2f} cider={m['cider']:.2f} "
        f"({result.manifest['failed_count']} failures)"
    )
    return 0


def _cmd_suggest(args) -> int:
    raw = [
        replace(rec, message=corpus_mod.preprocess_message(rec.message))
        for rec in corpus_mod.ingest_repo(args.repo, args.branch, args.since)
    ]
    retained, _ = corpus_mod.apply_filters(raw)
    if not retained:
        print("no usable history after filtering; cannot suggest", file=sys.stderr)
        return 1
    embedder = HashingEmbedder(256)
    index = RetrievalIndex.build(retained, embedder)
    query = Path(args.diff).read_text(encoding="utf-8")
    repo_name = retained[0].repo_full_name
    pairs = index.retrieve(query, args.k, repo_name, embedder=embedder)
    if args.verbose:
        for pair in pairs:
            print(f"  [{pair.hybrid_score:.3f}] {pair.handle.sha[:10]} {pair.message}")
    if args.provider_config:
        pc = ProviderConfig.from_file(args.provider_config)
        client = GenerationClient(pc.gen, inflight=pc.inflight)
        template = (
            PromptTemplate.from_file(args.template) if args.template else None
        )
        prompt = build_rag_prompt(
            query, pairs, template=template, max_chars=args.max_prompt_chars
        )
        print(client.generate(prompt, pairs))
    else:
        # Offline default: the retrieval-copy baseline.
        print(pairs[0].message)
    return 0


def _cmd_report(args) -> int:
    run_dirs = sorted(
        {p.parent for p in Path(args.input).rglob("manifest.json")}
    )
    if not run_dirs:
        raise ValueError(f"no experiment runs found under {args.input}")
    results = [harness.ExperimentResult.load(d) for d in run_dirs]
    table = harness.render_report(results)
    Path(args.out).write_text(table, encoding="utf-8")
    print(f"wrote comparison of {len(results)} runs to {args.out}")
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "filter": _cmd_filter,
    "stats": _cmd_stats,
    "tokenize": _cmd_tokenize,
    "evaluate": _cmd_evaluate,
    "index": _cmd_index,
    "retrieve": _cmd_retrieve,
    "experiment": _cmd_experiment,
    "suggest": _cmd_suggest,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CoracmgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
