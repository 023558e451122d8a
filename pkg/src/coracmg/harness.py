"""Experiment harness: sample a subset, run retrieve/augment/generate per
commit, score against the developer-written references, and render reports.

Each sampled commit goes through an independent pipeline run with retrieval
scoped to its own project and its own sha excluded.  Per-commit failures are
recorded in the result rows rather than aborting the run.  Result files are
``results.jsonl`` (rows sorted by sha), ``manifest.json`` and ``report.md``;
identical configurations and seeds reproduce ``results.jsonl`` byte for
byte.
"""

from __future__ import annotations

import hashlib
import json
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import metrics
from .augmenter import DEFAULT_MAX_PROMPT_CHARS, PromptTemplate
from .diffs import CommitRecord, language_of, read_jsonl
from .errors import CorpusTooSmall, ManifestMismatch
from .providers import (
    EmbeddingClient,
    GenerationClient,
    HashingEmbedder,
    MockGenerator,
    ProviderConfig,
)
from .retriever import RetrievalIndex
from .tokenizer import tokenize

GENERATORS = ("provider", "echo-mock", "constant-mock", "retrieval-copy")


@dataclass
class ExperimentConfig:
    corpus: str
    out_dir: str
    method: str = "direct"  # "direct" | "rag"
    k: int | None = None
    subset_size: int = 0  # 0 means the whole corpus
    seed: int = 0
    generator: str = "constant-mock"
    generator_text: str = "update code"
    index: str | None = None
    embedder: str = "hash"  # "hash" | "provider"
    embed_cache: str | None = None  # default: "<corpus>.embed_cache"
    template: str | None = None
    max_prompt_chars: int = DEFAULT_MAX_PROMPT_CHARS
    provider_config: str | None = None
    cider_scale: float = 100.0
    workers: int = 4

    def __post_init__(self):
        if self.method not in ("direct", "rag"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.method == "rag":
            if self.k is None or not 1 <= self.k <= 5:
                raise ValueError("method 'rag' requires k between 1 and 5")
        elif self.k is not None:
            raise ValueError("k is only meaningful for method 'rag'")

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))

    def to_dict(self) -> dict:
        return {
            "corpus": self.corpus,
            "out_dir": self.out_dir,
            "method": self.method,
            "k": self.k,
            "subset_size": self.subset_size,
            "seed": self.seed,
            "generator": self.generator,
            "generator_text": self.generator_text,
            "index": self.index,
            "embedder": self.embedder,
            "embed_cache": self.embed_cache,
            "template": self.template,
            "max_prompt_chars": self.max_prompt_chars,
            "provider_config": self.provider_config,
            "cider_scale": self.cider_scale,
            "workers": self.workers,
        }


def record_languages(record: CommitRecord) -> set[str]:
    return {language_of(path) for path in record.files} - {"other"}


def sample_subset(records: list[CommitRecord], n: int, seed: int) -> list[CommitRecord]:
    """Seeded sample of ``n`` records covering every language in the corpus.

    One record is drawn per uncovered language first; the remainder is a
    uniform draw.  Output preserves corpus order, and a given seed always
    selects the same subset.
    """
    if n > len(records):
        raise CorpusTooSmall(f"requested {n} records from a corpus of {len(records)}")
    langs = [sorted(record_languages(r)) for r in records]
    present = sorted({lang for ls in langs for lang in ls})
    if n < len(present):
        raise CorpusTooSmall(
            f"{n} records cannot cover the {len(present)} languages in the corpus"
        )
    rng = random.Random(seed)
    chosen: set[int] = set()
    covered: set[str] = set()
    for lang in present:
        if lang in covered:
            continue
        pool = [i for i in range(len(records)) if lang in langs[i] and i not in chosen]
        pick = rng.choice(pool)
        chosen.add(pick)
        covered.update(langs[pick])
    rest = [i for i in range(len(records)) if i not in chosen]
    chosen.update(rng.sample(rest, n - len(chosen)))
    return [records[i] for i in sorted(chosen)]


def retrieval_copy_generate(
    query_diff: str,
    repo: str,
    index: RetrievalIndex,
    embedder,
    exclude_sha: str | None = None,
) -> str:
    """The offline baseline: the top-1 retrieved pair's message, verbatim."""
    pairs = index.retrieve(query_diff, 1, repo, exclude_sha=exclude_sha, embedder=embedder)
    return pairs[0].message


@dataclass
class ExperimentResult:
    manifest: dict
    rows: list[dict]
    report: metrics.MetricReport
    out_dir: Path | None = None

    @classmethod
    def load(cls, run_dir: str | Path) -> "ExperimentResult":
        run_dir = Path(run_dir)
        manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
        rows = [
            json.loads(line)
            for line in (run_dir / "results.jsonl").read_text(encoding="utf-8").splitlines()
            if line
        ]
        means = manifest["metrics"]
        report = metrics.MetricReport(
            per_sample=[],
            bleu=means["bleu"],
            rouge_l=means["rouge_l"],
            meteor=means["meteor"],
            cider=means["cider"],
        )
        return cls(manifest=manifest, rows=rows, report=report, out_dir=run_dir)

    @property
    def label(self) -> str:
        method = self.manifest["config"]["method"]
        gen = self.manifest["config"]["generator"]
        k = self.manifest["config"]["k"]
        if method == "rag":
            return f"rag-k{k}-{gen}"
        return f"direct-{gen}"


def _file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _build_generator(config: ExperimentConfig):
    if config.generator == "echo-mock":
        return MockGenerator("echo", config.generator_text)
    if config.generator == "constant-mock":
        return MockGenerator("constant", config.generator_text)
    if config.generator == "provider":
        if not config.provider_config:
            raise ValueError("generator 'provider' needs a provider_config file")
        pc = ProviderConfig.from_file(config.provider_config)
        return GenerationClient(pc.gen, inflight=pc.inflight)
    return None  # retrieval-copy needs no generator object


def _build_embedder(config: ExperimentConfig, index: RetrievalIndex | None):
    if config.embedder == "provider":
        if not config.provider_config:
            raise ValueError("embedder 'provider' needs a provider_config file")
        pc = ProviderConfig.from_file(config.provider_config)
        # Cache lives beside the corpus so repeated runs and k sweeps reuse it.
        cache = config.embed_cache or f"{config.corpus}.embed_cache"
        return EmbeddingClient(
            pc.embed_endpoint,
            pc.embed_dimension,
            model=pc.embed_model,
            cache_dir=cache,
            inflight=pc.inflight,
        )
    return HashingEmbedder(index.dimension if index is not None else 256)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    started = time.time()
    records = list(read_jsonl(config.corpus))
    n = config.subset_size or len(records)
    subset = sample_subset(records, n, config.seed)

    needs_retrieval = config.method == "rag" or config.generator in (
        "echo-mock",
        "retrieval-copy",
    )
    index = None
    if needs_retrieval:
        if not config.index:
            raise ValueError("this configuration needs an index directory")
        index = RetrievalIndex.load(config.index)
    embedder = _build_embedder(config, index) if needs_retrieval else None
    generator = _build_generator(config)
    template = (
        PromptTemplate.from_file(config.template)
        if config.template
        else PromptTemplate.default()
    )

    def process(record: CommitRecord) -> dict:
        row = {
            "sha": record.sha,
            "repo_full_name": record.repo_full_name,
            "reference": record.message,
            "generated": None,
            "retrieved": [],
            "scores": None,
            "status": "ok",
        }
        try:
            examples = []
            if needs_retrieval:
                k = config.k if config.method == "rag" else 1
                examples = index.retrieve(
                    record.diff,
                    k,
                    record.repo_full_name,
                    exclude_sha=record.sha,
                    embedder=embedder,
                )
                row["retrieved"] = [
                    {
                        "sha": ex.handle.sha,
                        "repo_full_name": ex.handle.repo_full_name,
                        "hybrid_score": ex.hybrid_score,
                    }
                    for ex in examples
                ]
            if config.generator == "retrieval-copy":
                row["generated"] = examples[0].message
            else:
                if config.method == "rag":
                    prompt = template.render(
                        record.diff, examples, max_chars=config.max_prompt_chars
                    )
                else:
                    prompt = template.render(record.diff, [], max_chars=config.max_prompt_chars)
                row["generated"] = generator.generate(prompt, examples)
        except Exception as exc:  # recorded, never fatal to the run
            row["status"] = f"error: {type(exc).__name__}: {exc}"
        return row

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        rows = list(pool.map(process, subset))
    rows.sort(key=lambda r: r["sha"])

    ok_rows = [r for r in rows if r["status"] == "ok"]
    report = metrics.MetricReport()
    if ok_rows:
        tokenized = [
            (tokenize(r["generated"]), tokenize(r["reference"])) for r in ok_rows
        ]
        idf = metrics.build_idf([ref for _, ref in tokenized])
        samples = []
        for row, (hyp, ref) in zip(ok_rows, tokenized):
            scores = metrics.score_pair(hyp, ref, idf, cider_scale=config.cider_scale)
            row["scores"] = scores.to_dict()
            samples.append(scores)
        count = len(samples)
        report = metrics.MetricReport(
            per_sample=samples,
            bleu=sum(s.bleu for s in samples) / count,
            rouge_l=sum(s.rouge_l for s in samples) / count,
            meteor=sum(s.meteor for s in samples) / count,
            cider=sum(s.cider for s in samples) / count,
        )

    manifest = {
        "config": config.to_dict(),
        "seed": config.seed,
        "corpus_sha256": _file_sha256(config.corpus),
        "template_sha256": hashlib.sha256(
            (template.preamble + template.example_block + template.tail).encode("utf-8")
        ).hexdigest(),
        "generator_id": getattr(generator, "identifier", config.generator),
        "embedder_id": getattr(embedder, "identifier", None)
        or (index.embedder_id if index else None),
        "subset_size": len(subset),
        "ok_count": len(ok_rows),
        "failed_count": len(rows) - len(ok_rows),
        "metrics": {
            "bleu": report.bleu,
            "rouge_l": report.rouge_l,
            "meteor": report.meteor,
            "cider": report.cider,
        },
        "runtime_seconds": round(time.time() - started, 3),
    }

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "results.jsonl", "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False))
            fh.write("\n")
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )
    result = ExperimentResult(manifest=manifest, rows=rows, report=report, out_dir=out_dir)
    (out_dir / "report.md").write_text(_single_run_report(result), encoding="utf-8")
    return result


def run_k_sweep(config: ExperimentConfig, ks=(1, 2, 3, 4, 5)) -> list[ExperimentResult]:
    """Run the rag method for each k, writing each run under out_dir/k<k>."""
    results = []
    base_out = Path(config.out_dir)
    for k in ks:
        sub = ExperimentConfig(**{**config.to_dict(), "method": "rag", "k": k,
                                  "out_dir": str(base_out / f"k{k}")})
        results.append(run_experiment(sub))
    return results


def _single_run_report(result: ExperimentResult) -> str:
    m = result.manifest["metrics"]
    lines = [
        f"# Run {result.label}",
        "",
        f"- commits: {result.manifest['subset_size']} ({result.manifest['failed_count']} failed)",
        f"- seed: {result.manifest['seed']}",
        "",
        "| Metric | Mean |",
        "|---|---|",
        f"| BLEU | {m['bleu']:.2f} |",
        f"| Rouge-L | {m['rouge_l']:.2f} |",
        f"| METEOR | {m['meteor']:.2f} |",
        f"| CIDEr | {m['cider']:.2f} |",
        "",
    ]
    return "\n".join(lines)


def _delta(direct: float, enhanced: float) -> str:
    if direct == 0:
        return "n/a"
    pct = round(100 * (enhanced - direct) / direct)
    arrow = "↑" if pct >= 0 else "↓"
    return f"{arrow}{abs(pct)}%"


METRIC_KEYS = ("bleu", "rouge_l", "meteor", "cider")
METRIC_TITLES = {"bleu": "BLEU", "rouge_l": "Rouge-L", "meteor": "METEOR", "cider": "CIDEr"}


def render_report(results: list[ExperimentResult]) -> str:
    """Comparison table against the direct baseline, plus a k-sweep series.

    All runs must share the same corpus, seed and subset size; mismatches
    raise :class:`ManifestMismatch`.
    """
    if not results:
        raise ManifestMismatch("no experiment results to report on")
    fingerprint = None
    for res in results:
        fp = (
            res.manifest["corpus_sha256"],
            res.manifest["seed"],
            res.manifest["subset_size"],
        )
        if fingerprint is None:
            fingerprint = fp
        elif fp != fingerprint:
            raise ManifestMismatch(
                f"run {res.label} was made from a different subset than the others"
            )
    direct = [r for r in results if r.manifest["config"]["method"] == "direct"]
    enhanced = [r for r in results if r.manifest["config"]["method"] != "direct"]
    lines = ["# Experiment comparison", ""]
    header = "| Run | " + " | ".join(METRIC_TITLES[k] for k in METRIC_KEYS) + " |"
    lines += [header, "|" + "---|" * (len(METRIC_KEYS) + 1)]
    for res in direct:
        m = res.manifest["metrics"]
        cells = " | ".join(f"{m[k]:.2f}" for k in METRIC_KEYS)
        lines.append(f"| {res.label} | {cells} |")
    base = direct[0].manifest["metrics"] if direct else None
    for res in sorted(enhanced, key=lambda r: (r.manifest["config"]["k"] or 0, r.label)):
        m = res.manifest["metrics"]
        if base:
            cells = " | ".join(
                f"{m[k]:.2f} ({_delta(base[k], m[k])})" for k in METRIC_KEYS
            )
        else:
            cells = " | ".join(f"{m[k]:.2f}" for k in METRIC_KEYS)
        lines.append(f"| {res.label} | {cells} |")
    lines.append("")

    sweep = sorted(
        (r for r in enhanced if r.manifest["config"]["k"] is not None),
        key=lambda r: r.manifest["config"]["k"],
    )
    if len(sweep) >= 2:
        lines += ["## Scores by number of example pairs", ""]
        lines.append("| k | " + " | ".join(METRIC_TITLES[k] for k in METRIC_KEYS) + " |")
        lines.append("|" + "---|" * (len(METRIC_KEYS) + 1))
        for res in sweep:
            m = res.manifest["metrics"]
            cells = " | ".join(f"{m[k]:.2f}" for k in METRIC_KEYS)
            lines.append(f"| {res.manifest['config']['k']} | {cells} |")
        lines.append("")
    return "\n".join(lines)
