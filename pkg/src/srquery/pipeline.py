"""Pipeline stages behind the CLI: ingest, formulate, refine, guided,
execute, evaluate, analyze, report.

Stages communicate only through the append-only run log and the on-disk
result cache, so each one can be re-run safely: work already recorded is
skipped, per-topic failures are recorded without aborting the batch, and
with the mock backend the whole pipeline is deterministic.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field, asdict
from pathlib import Path
from typing import Callable, Optional

from . import collections as colls
from . import entrez as ez
from .analysis import (
    RunResult,
    RunSeries,
    TopicClass,
    classify_topic,
    mesh_validity_ratio,
    oracle_select,
    retrieved_ratio_stats,
    significance_matrix,
    unjudged_fraction,
    variability_summary,
    TooFewRunsError,
)
from .gateway import (
    BackendConfig,
    GatewayError,
    EmptySeedStudyError,
    generate_with_retry,
    make_backend,
    run_guided_session,
)
from .metrics import Metrics, NoRelevantDocsError, evaluate_topic, macro_average
from .prompts import (
    EmptyPoolError,
    ExampleReview,
    MissingBindingError,
    PromptBindings,
    dice_score,
    hqe_example,
    render,
    select_related_example,
)
from .query_ast import QueryParseError, parse, serialize
from .retrieval import build_index, execute_local
from .runlog import RunRecord, append_records, check_integrity, read_records

__all__ = [
    "AppConfig",
    "UsageError",
    "MissingSeedQueryError",
    "NoSeedStudyError",
    "cmd_ingest",
    "cmd_formulate",
    "cmd_refine",
    "cmd_guided",
    "cmd_execute",
    "cmd_evaluate",
    "cmd_analyze",
    "cmd_report",
]

log = logging.getLogger(__name__)

FORMULATE_PROMPTS = ("q1", "q2", "q3", "q4", "q5")
REFINE_PROMPTS = ("q6", "q7")
EXAMPLE_PROMPTS = ("q4", "q5", "q7")
SEED_SOURCES = ("original", "conceptual", "objective", "q4-runlog")


class UsageError(ValueError):
    pass


class MissingSeedQueryError(UsageError):
    pass


class NoSeedStudyError(UsageError):
    pass


@dataclass
class AppConfig:
    topics: str
    qrels: str
    runlog: str
    cache_dir: str
    report_dir: str
    corpus: Optional[str] = None
    mesh: Optional[str] = None
    backend: BackendConfig = dc_field(default_factory=BackendConfig)
    execution_backend: str = "local"  # local | entrez
    entrez: Optional[ez.EntrezConfig] = None
    runs_per_topic: int = 1
    parallelism: int = 1
    seed_query_files: dict[str, str] = dc_field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.runs_per_topic < 1:
            raise UsageError("runs_per_topic must be >= 1")
        if self.parallelism < 1:
            raise UsageError("parallelism must be >= 1")
        if self.execution_backend not in ("local", "entrez"):
            raise UsageError(f"unknown execution backend {self.execution_backend!r}")

    @classmethod
    def from_file(cls, path) -> "AppConfig":
        with open(path, "r", encoding="utf-8") as f:
            obj = json.load(f)
        try:
            backend = BackendConfig(**obj.pop("backend", {}))
            entrez_cfg = ez.EntrezConfig(**obj["entrez"]) if obj.get("entrez") else None
            obj.pop("entrez", None)
            return cls(backend=backend, entrez=entrez_cfg, **obj)
        except TypeError as e:
            raise UsageError(f"bad configuration key in {path}: {e}") from e

    def ensure_dirs(self) -> None:
        """Verify input paths and create the output directories."""
        required = {"topics": self.topics, "qrels": self.qrels}
        optional = {
            "corpus": self.corpus,
            "mesh": self.mesh,
            "backend.fixtures_path": self.backend.fixtures_path,
            **{f"seed_query_files.{k}": v for k, v in self.seed_query_files.items()},
        }
        missing = [f"{name}: {path}" for name, path in required.items()
                   if not Path(path).exists()]
        missing += [f"{name}: {path}" for name, path in optional.items()
                    if path and not Path(path).exists()]
        if missing:
            raise UsageError("missing input files - " + "; ".join(missing))
        Path(self.cache_dir).mkdir(parents=True, exist_ok=True)
        Path(self.report_dir).mkdir(parents=True, exist_ok=True)
        Path(self.runlog).parent.mkdir(parents=True, exist_ok=True)

    def load_topics(self) -> list[colls.ReviewTopic]:
        return colls.load_topics(self.topics)

    def load_qrels(self) -> colls.Qrels:
        return colls.load_qrels(self.qrels)

    def load_vocab(self) -> Optional[colls.MeshVocab]:
        return colls.load_mesh(self.mesh) if self.mesh else None


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _existing_run_ids(cfg: AppConfig) -> set[str]:
    return {r.run_id for r in read_records(cfg.runlog)}

def _method_label(prompt_id: str, example_mode: str, seed_source: str) -> str:
    if seed_source:
        return f"{prompt_id}-{seed_source}"
    if example_mode and example_mode != "none":
        return f"{prompt_id}-{example_mode}"
    return prompt_id


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _run_parallel(tasks: list[Callable[[], list[RunRecord]]], parallelism: int) -> list[RunRecord]:
    if parallelism <= 1 or len(tasks) <= 1:
        results = [task() for task in tasks]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(lambda t: t(), tasks))
    records = [record for batch in results for record in batch]
    records.sort(key=lambda r: r.run_id)  # deterministic log order under parallelism
    return records


def _example_pool(topics: list[colls.ReviewTopic]) -> list[ExampleReview]:
    pool = []
    for topic in topics:
        if not topic.original_query:
            continue
        try:
            pool.append(
                ExampleReview(topic_id=topic.topic_id, title=topic.title,
                              query_text=topic.original_query)
            )
        except QueryParseError as e:
            log.warning("topic %s: original query does not parse, excluded from pool: %s",
                        topic.topic_id, e)
    return pool


def _resolve_example(
    topic: colls.ReviewTopic, example_mode: str, pool: list[ExampleReview]
) -> Optional[ExampleReview]:
    if example_mode == "none":
        return None
    if example_mode == "hqe":
        return hqe_example()
    if example_mode == "re":
        return select_related_example(topic, pool, dice_score)
    raise UsageError(f"unknown example mode {example_mode!r}")


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------

def cmd_ingest(cfg: AppConfig) -> dict:
    """Load and validate every configured input, then seed the run log with
    one record per topic's original query (method "original") so later
    stages can execute and evaluate the expert baseline."""
    cfg.ensure_dirs()
    topics = cfg.load_topics()
    qrels = cfg.load_qrels()
    corpus = colls.load_corpus(cfg.corpus) if cfg.corpus else None
    vocab = cfg.load_vocab()

    existing = _existing_run_ids(cfg)
    records = []
    for topic in topics:
        if not topic.original_query:
            continue
        run_id = f"gen:original:none:-:{topic.topic_id}:r0"
        if run_id in existing:
            continue
        try:
            canonical = serialize(parse(topic.original_query))
        except QueryParseError as e:
            records.append(RunRecord(
                run_id=run_id, stage="generate", topic_id=topic.topic_id,
                prompt_id="original", status="error", error=str(e),
            ))
            continue
        records.append(RunRecord(
            run_id=run_id, stage="generate", topic_id=topic.topic_id,
            prompt_id="original", backend="none", query=canonical,
            query_digest=ez.query_digest(canonical),
        ))
    append_records(cfg.runlog, records)

    summary = {
        "topics": len(topics),
        "topics_with_original_query": sum(1 for t in topics if t.original_query),
        "topics_with_seed_studies": sum(1 for t in topics if t.seed_studies),
        "judgments": len(qrels.judgments),
        "corpus_docs": len(corpus) if corpus else 0,
        "mesh_descriptors": len(vocab) if vocab else 0,
        "original_records_added": len(records),
    }
    log.info("ingest: %s", summary)
    return summary


# ---------------------------------------------------------------------------
# formulate / refine / guided
# ---------------------------------------------------------------------------

def _generation_record(
    run_id: str,
    topic_id: str,
    prompt_id: str,
    example_mode: str,
    seed_source: str,
    run_index: int,
    cfg: AppConfig,
    outcome=None,
    error: Optional[Exception] = None,
) -> RunRecord:
    if error is not None:
        return RunRecord(
            run_id=run_id, stage="generate", topic_id=topic_id, prompt_id=prompt_id,
            example_mode=example_mode, seed_source=seed_source, run_index=run_index,
            backend=cfg.backend.describe(), status="error", error=str(error),
        )
    canonical = serialize(outcome.query)
    return RunRecord(
        run_id=run_id, stage="generate", topic_id=topic_id, prompt_id=prompt_id,
        example_mode=example_mode, seed_source=seed_source, run_index=run_index,
        attempt=outcome.attempts, backend=cfg.backend.describe(),
        raw_response_digest=_sha(outcome.raw_responses[-1]),
        query=canonical, query_digest=ez.query_digest(canonical),
    )


def cmd_formulate(cfg: AppConfig, prompt_id: str, example_mode: str = "none",
                  backend=None) -> list[RunRecord]:
    """Generate one query per topic per run index with a single formulation
    prompt (q1-q5).  q4/q5 require an example mode; failures are recorded
    per topic and never abort the batch."""
    if prompt_id not in FORMULATE_PROMPTS:
        raise UsageError(f"formulate accepts prompts {FORMULATE_PROMPTS}, got {prompt_id!r}")
    if prompt_id in EXAMPLE_PROMPTS and example_mode == "none":
        raise UsageError(f"{prompt_id} requires --example-mode hqe or re")
    if prompt_id not in EXAMPLE_PROMPTS and example_mode != "none":
        raise UsageError(f"{prompt_id} does not take an example")

    cfg.ensure_dirs()
    topics = cfg.load_topics()
    pool = _example_pool(topics) if example_mode == "re" else []
    backend = backend if backend is not None else make_backend(cfg.backend)
    existing = _existing_run_ids(cfg)

    def task_for(topic: colls.ReviewTopic) -> Callable[[], list[RunRecord]]:
        def task() -> list[RunRecord]:
            out = []
            for run_index in range(cfg.runs_per_topic):
                run_id = f"gen:{prompt_id}:{example_mode}:-:{topic.topic_id}:r{run_index}"
                if run_id in existing:
                    continue
                try:
                    example = _resolve_example(topic, example_mode, pool)
                    bindings = PromptBindings(
                        review_title=topic.title,
                        example_review_title=example.title if example else None,
                        example_review_query=example.query_text if example else None,
                    )
                    prompt = render(prompt_id, bindings)
                    outcome = generate_with_retry(prompt, cfg.backend, backend=backend)
                    out.append(_generation_record(
                        run_id, topic.topic_id, prompt_id, example_mode, "", run_index,
                        cfg, outcome=outcome))
                except (GatewayError, EmptyPoolError, MissingBindingError, QueryParseError) as e:
                    log.warning("formulate %s %s: %s", prompt_id, topic.topic_id, e)
                    out.append(_generation_record(
                        run_id, topic.topic_id, prompt_id, example_mode, "", run_index,
                        cfg, error=e))
            return out
        return task

    records = _run_parallel([task_for(t) for t in topics], cfg.parallelism)
    append_records(cfg.runlog, records)
    return records


def _refinement_pool(
    topics: list[colls.ReviewTopic], seeds: dict[str, str]
) -> list[ExampleReview]:
    pool = []
    for topic in topics:
        initial = seeds.get(topic.topic_id)
        if not initial or not topic.original_query or initial == topic.original_query:
            continue
        try:
            pool.append(ExampleReview(
                topic_id=topic.topic_id, title=topic.title,
                query_text=initial, refined_query_text=topic.original_query,
            ))
        except QueryParseError as e:
            log.warning("topic %s: seed query does not parse, excluded from pool: %s",
                        topic.topic_id, e)
    return pool


def _seed_queries(cfg: AppConfig, seed_source: str,
                  topics: list[colls.ReviewTopic]) -> dict[str, str]:
    """Map topic_id -> initial query text for the chosen seed source."""
    if seed_source == "original":
        return {t.topic_id: t.original_query for t in topics if t.original_query}
    if seed_source == "q4-runlog":
        queries: dict[str, str] = {}
        for record in read_records(cfg.runlog):
            if record.stage == "generate" and record.prompt_id == "q4" \
                    and record.status == "ok" and record.query:
                queries[record.topic_id] = record.query
        return queries
    path = cfg.seed_query_files.get(seed_source)
    if not path:
        raise MissingSeedQueryError(
            f"seed source {seed_source!r} needs a query file under seed_query_files"
        )
    queries = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                obj = json.loads(line)
                queries[str(obj["topic_id"])] = obj["query"]
    return queries


def cmd_refine(cfg: AppConfig, prompt_id: str, seed_source: str,
               example_mode: str = "none", backend=None) -> list[RunRecord]:
    """Refine existing queries with q6/q7; seeds come from the topics'
    original queries, user-supplied files, or prior q4 run-log records."""
    if prompt_id not in REFINE_PROMPTS:
        raise UsageError(f"refine accepts prompts {REFINE_PROMPTS}, got {prompt_id!r}")
    if seed_source not in SEED_SOURCES:
        raise UsageError(f"unknown seed source {seed_source!r}")
    if prompt_id == "q7" and example_mode == "none":
        raise UsageError("q7 requires --example-mode hqe or re")
    if prompt_id == "q6" and example_mode != "none":
        raise UsageError("q6 does not take an example")

    cfg.ensure_dirs()
    topics = cfg.load_topics()
    seeds = _seed_queries(cfg, seed_source, topics)
    # For q7's related examples, a refinement pair is (the example topic's
    # seed query, its expert original query); topics missing either drop out.
    pool = _refinement_pool(topics, seeds) if example_mode == "re" else []
    backend = backend if backend is not None else make_backend(cfg.backend)
    existing = _existing_run_ids(cfg)

    def task_for(topic: colls.ReviewTopic) -> Callable[[], list[RunRecord]]:
        def task() -> list[RunRecord]:
            out = []
            for run_index in range(cfg.runs_per_topic):
                run_id = f"gen:{prompt_id}:{example_mode}:{seed_source}:{topic.topic_id}:r{run_index}"
                if run_id in existing:
                    continue
                try:
                    if topic.topic_id not in seeds:
                        raise MissingSeedQueryError(
                            f"no {seed_source} seed query for topic {topic.topic_id}"
                        )
                    example = _resolve_example(topic, example_mode, pool)
                    bindings = PromptBindings(
                        review_title=topic.title,
                        initial_query=seeds[topic.topic_id],
                        example_review_title=example.title if example else None,
                        example_review_initial_query=example.query_text if example else None,
                        example_review_refined_query=(
                            example.refined_query_text if example else None
                        ),
                    )
                    prompt = render(prompt_id, bindings)
                    outcome = generate_with_retry(prompt, cfg.backend, backend=backend)
                    record = _generation_record(
                        run_id, topic.topic_id, prompt_id, example_mode, seed_source,
                        run_index, cfg, outcome=outcome)
                except (GatewayError, EmptyPoolError, MissingBindingError,
                        MissingSeedQueryError, QueryParseError) as e:
                    log.warning("refine %s %s: %s", prompt_id, topic.topic_id, e)
                    record = _generation_record(
                        run_id, topic.topic_id, prompt_id, example_mode, seed_source,
                        run_index, cfg, error=e)
                out.append(record)
            return out
        return task

    records = _run_parallel([task_for(t) for t in topics], cfg.parallelism)
    append_records(cfg.runlog, records)
    return records


def cmd_guided(cfg: AppConfig, backend=None) -> list[RunRecord]:
    """Run the four-step guided session once per (topic, seed study, run
    index).  Topics without seed studies get an error record."""
    cfg.ensure_dirs()
    topics = cfg.load_topics()
    backend = backend if backend is not None else make_backend(cfg.backend)
    existing = _existing_run_ids(cfg)

    def task_for(topic: colls.ReviewTopic) -> Callable[[], list[RunRecord]]:
        def task() -> list[RunRecord]:
            out = []
            if not topic.seed_studies:
                run_id = f"gen:guided:none:-:{topic.topic_id}:r0"
                if run_id not in existing:
                    out.append(_generation_record(
                        run_id, topic.topic_id, "guided", "none", "", 0, cfg,
                        error=NoSeedStudyError(f"topic {topic.topic_id} has no seed study")))
                return out
            for seed_ordinal, seed in enumerate(topic.seed_studies):
                for attempt_index in range(cfg.runs_per_topic):
                    # One flat run_index per (seed, repeat) so downstream
                    # analysis sees each session as a distinct run.
                    run_index = seed_ordinal * cfg.runs_per_topic + attempt_index
                    run_id = f"gen:guided:none:s{seed.pmid}:{topic.topic_id}:r{attempt_index}"
                    if run_id in existing:
                        continue
                    try:
                        outcome = run_guided_session(topic, seed, cfg.backend, backend=backend)
                        out.append(_generation_record(
                            run_id, topic.topic_id, "guided", "none", "", run_index,
                            cfg, outcome=outcome))
                    except (GatewayError, EmptySeedStudyError) as e:
                        log.warning("guided %s seed %s: %s", topic.topic_id, seed.pmid, e)
                        out.append(_generation_record(
                            run_id, topic.topic_id, "guided", "none", "", run_index,
                            cfg, error=e))
            return out
        return task

    records = _run_parallel([task_for(t) for t in topics], cfg.parallelism)
    append_records(cfg.runlog, records)
    return records


# ---------------------------------------------------------------------------
# execute / evaluate
# ---------------------------------------------------------------------------

def cmd_execute(cfg: AppConfig, backend=None) -> list[RunRecord]:
    """Fill retrieved pmid sets for every generated query, through the local
    index or Entrez; results land in the digest-keyed cache."""
    cfg.ensure_dirs()
    existing = _existing_run_ids(cfg)
    generations = [r for r in read_records(cfg.runlog)
                   if r.stage == "generate" and r.status == "ok" and r.query]

    index = None
    vocab = None
    if cfg.execution_backend == "local":
        if not cfg.corpus:
            raise UsageError("local execution requires a corpus path")
        vocab = cfg.load_vocab()
        index = build_index(colls.load_corpus(cfg.corpus), vocab)
    entrez_cfg = cfg.entrez
    if cfg.execution_backend == "entrez":
        base = entrez_cfg or ez.EntrezConfig()
        entrez_cfg = ez.EntrezConfig(**{**asdict(base), "cache_dir": base.cache_dir or cfg.cache_dir})
    limiter = ez.RateLimiter(entrez_cfg.effective_rate()) if entrez_cfg else None

    records = []
    for gen in generations:
        run_id = f"exec:{cfg.execution_backend}:{gen.run_id}"
        if run_id in existing:
            continue
        try:
            query = parse(gen.query)
            digest = gen.query_digest or ez.query_digest(gen.query)
            cached = ez.load_cached_result(cfg.cache_dir, digest)
            if cached is not None:
                pmids = set(cached)
            elif cfg.execution_backend == "local":
                pmids = execute_local(index, query)
                ez.store_result(cfg.cache_dir, digest, sorted(pmids))
            else:
                pmids = ez.entrez_search(query, entrez_cfg, limiter=limiter)
            records.append(RunRecord(
                run_id=run_id, stage="execute", topic_id=gen.topic_id,
                prompt_id=gen.prompt_id, example_mode=gen.example_mode,
                seed_source=gen.seed_source, run_index=gen.run_index,
                backend=cfg.execution_backend, query=gen.query, query_digest=digest,
                retrieved_count=len(pmids), parent_run_id=gen.run_id,
            ))
        except Exception as e:  # per-record failures never abort the batch
            log.warning("execute %s: %s", gen.run_id, e)
            records.append(RunRecord(
                run_id=run_id, stage="execute", topic_id=gen.topic_id,
                prompt_id=gen.prompt_id, example_mode=gen.example_mode,
                seed_source=gen.seed_source, run_index=gen.run_index,
                backend=cfg.execution_backend, parent_run_id=gen.run_id,
                status="error", error=str(e),
            ))
    append_records(cfg.runlog, records)
    return records


def cmd_evaluate(cfg: AppConfig) -> list[RunRecord]:
    """Score executed runs against the qrels (binarized at grade >= 1).
    Topics with no relevant judgments are skipped with a warning."""
    cfg.ensure_dirs()
    qrels = cfg.load_qrels()
    existing = _existing_run_ids(cfg)
    executions = [r for r in read_records(cfg.runlog)
                  if r.stage == "execute" and r.status == "ok"]

    records = []
    for ex in executions:
        run_id = f"eval:{ex.run_id}"
        if run_id in existing:
            continue
        pmids = ez.load_cached_result(cfg.cache_dir, ex.query_digest)
        base = dict(
            run_id=run_id, stage="evaluate", topic_id=ex.topic_id,
            prompt_id=ex.prompt_id, example_mode=ex.example_mode,
            seed_source=ex.seed_source, run_index=ex.run_index,
            query_digest=ex.query_digest, retrieved_count=ex.retrieved_count,
            parent_run_id=ex.run_id,
        )
        if pmids is None:
            records.append(RunRecord(**base, status="error",
                                     error="no cached result for query digest"))
            continue
        try:
            m = evaluate_topic(set(pmids), qrels, ex.topic_id)
        except NoRelevantDocsError as e:
            log.warning("evaluate %s: %s", ex.run_id, e)
            records.append(RunRecord(**base, status="skipped", error=str(e)))
            continue
        records.append(RunRecord(**base, metrics={
            "precision": m.precision, "recall": m.recall, "f1": m.f1, "f3": m.f3,
            "retrieved_count": m.retrieved_count, "relevant_count": m.relevant_count,
            "hit_count": m.hit_count,
        }))
    append_records(cfg.runlog, records)
    return records


# ---------------------------------------------------------------------------
# analyze / report
# ---------------------------------------------------------------------------

def _metrics_from_record(record: RunRecord) -> Metrics:
    m = record.metrics or {}
    return Metrics(
        precision=m.get("precision", 0.0), recall=m.get("recall", 0.0),
        f1=m.get("f1", 0.0), f3=m.get("f3", 0.0),
        retrieved_count=m.get("retrieved_count", 0),
        relevant_count=m.get("relevant_count", 0), hit_count=m.get("hit_count", 0),
    )


def _evaluated_by_method(records: list[RunRecord]) -> dict[str, dict[str, dict[int, RunRecord]]]:
    """method -> topic_id -> run_index -> evaluation record."""
    out: dict[str, dict[str, dict[int, RunRecord]]] = {}
    for record in records:
        if record.stage != "evaluate" or record.status != "ok":
            continue
        method = _method_label(record.prompt_id, record.example_mode, record.seed_source)
        out.setdefault(method, {}).setdefault(record.topic_id, {})[record.run_index] = record
    return out


def cmd_analyze(cfg: AppConfig) -> dict:
    """Produce analysis_report.json (oracle selection, success/failure
    classes, retrieved-count ratios, MeSH validity, unjudged fractions,
    multi-run variability) and one significance matrix CSV per metric."""
    cfg.ensure_dirs()
    all_records = read_records(cfg.runlog)
    by_method = _evaluated_by_method(all_records)
    qrels = cfg.load_qrels()
    vocab = cfg.load_vocab()

    generated_queries: dict[str, str] = {
        r.run_id: r.query for r in all_records if r.stage == "generate" and r.query
    }

    report: dict = {"methods": {}, "significance": {}}
    original = by_method.get("original", {})

    for method, topics in sorted(by_method.items()):
        if method == "original":
            continue
        method_report: dict = {}

        # Oracle run per topic, then the success/failure classification
        # against the original query's effectiveness.
        classes: dict[str, str] = {}
        ratio_pairs: list[tuple[int, int]] = []
        ratio_labels: list[TopicClass] = []
        unjudged: dict[str, float] = {}
        oracle_runs: dict[str, RunRecord] = {}
        for topic_id, runs in sorted(topics.items()):
            series = RunSeries(topic_id, tuple(
                RunResult(idx, _metrics_from_record(rec)) for idx, rec in sorted(runs.items())
            ))
            oracle = oracle_select(series)
            oracle_record = runs[oracle.run_index]
            oracle_runs[topic_id] = oracle_record
            pmids = ez.load_cached_result(cfg.cache_dir, oracle_record.query_digest)
            if pmids:
                unjudged[topic_id] = unjudged_fraction(set(pmids), qrels, topic_id)
            if topic_id in original and 0 in original[topic_id]:
                original_metrics = _metrics_from_record(original[topic_id][0])
                cls = classify_topic(oracle.metrics, original_metrics)
                classes[topic_id] = cls.value
                if original_metrics.retrieved_count > 0:
                    ratio_pairs.append(
                        (oracle.metrics.retrieved_count, original_metrics.retrieved_count)
                    )
                    ratio_labels.append(cls)
        method_report["topic_classes"] = classes
        if ratio_pairs:
            medians = retrieved_ratio_stats(ratio_pairs, ratio_labels)
            method_report["retrieved_ratio_median"] = {
                cls.value: round(v, 4) for cls, v in medians.items()
            }
        method_report["unjudged_fraction"] = {t: round(v, 4) for t, v in sorted(unjudged.items())}

        # MeSH validity over the oracle queries.
        if vocab is not None:
            counts, invalid = [], []
            for record in oracle_runs.values():
                text = generated_queries.get(record.parent_run_id.split(":", 2)[-1]) or record.query
                if not text:
                    continue
                validity = mesh_validity_ratio(parse(text), vocab)
                counts.append(validity.mesh_count)
                invalid.append(validity.invalid_fraction * validity.mesh_count)
            total = sum(counts)
            method_report["mesh_terms_per_query"] = (
                round(sum(counts) / len(counts), 4) if counts else 0.0
            )
            method_report["invalid_mesh_fraction"] = (
                round(sum(invalid) / total, 4) if total else 0.0
            )

        # Across-run variability (needs >= 2 aligned runs per topic).
        run_sets = {frozenset(runs) for runs in topics.values()}
        if len(run_sets) == 1 and len(next(iter(run_sets))) >= 2:
            series_list = [
                RunSeries(topic_id, tuple(
                    RunResult(idx, _metrics_from_record(rec)) for idx, rec in sorted(runs.items())
                ))
                for topic_id, runs in sorted(topics.items())
            ]
            variability = {}
            for metric in ("precision", "recall", "f1", "f3"):
                try:
                    summary = variability_summary(series_list, metric)
                except TooFewRunsError:
                    continue
                variability[metric] = {
                    "mean": summary.mean,
                    "variance": summary.variance,
                    "variance_to_mean_ratio": summary.variance_to_mean_ratio,
                    "per_topic_quartiles": summary.per_topic_quartiles,
                }
            method_report["variability"] = variability
        else:
            method_report["variability"] = "unavailable (needs >= 2 aligned runs per topic)"

        report["methods"][method] = method_report

    # Significance matrices over per-topic mean scores, one CSV per metric.
    for metric in ("precision", "recall", "f1", "f3"):
        common_topics: Optional[set[str]] = None
        for topics in by_method.values():
            ids = set(topics)
            common_topics = ids if common_topics is None else common_topics & ids
        if not common_topics or len(common_topics) < 2 or len(by_method) < 2:
            continue
        scores = {}
        for method, topics in by_method.items():
            scores[method] = [
                float(sum(_metrics_value(rec, metric) for rec in topics[t].values())
                      / len(topics[t]))
                for t in sorted(common_topics)
            ]
        methods, cells, m = significance_matrix(scores)
        path = Path(cfg.report_dir) / f"significance_{metric}.csv"
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["method"] + methods)
            for row_method in methods:
                row = [row_method]
                for col in methods:
                    if row_method == col:
                        row.append("")
                    else:
                        cell = cells[(row_method, col)]
                        row.append("degenerate" if cell is None else f"{cell:.6f}")
                writer.writerow(row)
        report["significance"][metric] = {
            "csv": str(path),
            "bonferroni_m": m,
            "paired_topics": len(common_topics),
        }

    out_path = Path(cfg.report_dir) / "analysis_report.json"
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    problems = check_integrity(all_records)
    if problems:
        log.warning("run log integrity problems: %s", problems)
    return report


def _metrics_value(record: RunRecord, metric: str) -> float:
    return float((record.metrics or {}).get(metric, 0.0))


def cmd_report(cfg: AppConfig) -> Path:
    """Write per-topic scores and the per-method macro-average table
    (Precision, F1, F3, Recall column order).

    Topics whose generation or execution failed count as zeros in the
    averages; topics with no relevant judgments are excluded entirely.
    """
    cfg.ensure_dirs()
    records = read_records(cfg.runlog)
    by_method = _evaluated_by_method(records)
    qrels = cfg.load_qrels()

    # Topics each method attempted, for zero-filling failures.
    attempted: dict[str, set[str]] = {}
    for record in records:
        if record.stage == "generate":
            method = _method_label(record.prompt_id, record.example_mode, record.seed_source)
            attempted.setdefault(method, set()).add(record.topic_id)

    per_topic_path = Path(cfg.report_dir) / "per_topic.csv"
    with open(per_topic_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["topic_id", "prompt_id", "run_index", "precision", "f1", "f3", "recall"])
        for method, topics in sorted(by_method.items()):
            for topic_id, runs in sorted(topics.items()):
                for run_index, record in sorted(runs.items()):
                    m = record.metrics or {}
                    writer.writerow([
                        topic_id, method, run_index,
                        f"{m.get('precision', 0.0):.6f}", f"{m.get('f1', 0.0):.6f}",
                        f"{m.get('f3', 0.0):.6f}", f"{m.get('recall', 0.0):.6f}",
                    ])

    zero = Metrics(0.0, 0.0, 0.0, 0.0)
    report_path = Path(cfg.report_dir) / "report.csv"
    with open(report_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["method", "topics", "precision", "f1", "f3", "recall"])
        for method in sorted(set(by_method) | set(attempted)):
            topics = by_method.get(method, {})
            per_topic = []
            for topic_id, runs in sorted(topics.items()):
                per_run = [_metrics_from_record(rec) for _, rec in sorted(runs.items())]
                per_topic.append(macro_average(per_run))
            # Failed topics score zero, provided they were evaluable at all.
            for topic_id in sorted(attempted.get(method, set()) - set(topics)):
                if qrels.relevant_for(topic_id):
                    per_topic.append(zero)
            if not per_topic:
                continue
            agg = macro_average(per_topic)
            writer.writerow([
                method, len(per_topic),
                f"{agg.precision:.6f}", f"{agg.f1:.6f}", f"{agg.f3:.6f}", f"{agg.recall:.6f}",
            ])
    return report_path
