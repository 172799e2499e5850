"""Multi-method, multi-run attribution experiments and their report files.

Every (method, sample, run) job computes one attribution. Baselines query a
coalition utility through a sorted-coalition cache; the keypoint pipeline
talks to the attribution model directly. Metrics are computed after all jobs
finish, over records sorted by (method, query_id, run), so the output does
not depend on scheduling.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from maxshapley.core.clipping import clip_and_renormalize
from maxshapley.core.exact import full_shapley, leave_one_out
from maxshapley.core.games import AttributionVector, UtilityOracle
from maxshapley.core.kernel import ALL, kernel_shap
from maxshapley.core.sampling import mc_antithetic_shapley, mc_uniform_shapley
from maxshapley.errors import MaxShapleyError, UndefinedMetricError, UsageError
from maxshapley.evaluation.dataset import AnnotatedSample
from maxshapley.evaluation.metrics import jaccard_at_k, kendall_tau_b
from maxshapley.judge.agent import PromptedAgent
from maxshapley.judge.backends import ChatBackend
from maxshapley.judge.cache import CachedOracle, UtilityCache
from maxshapley.judge.endpoints import EndpointConfig, estimate_cost
from maxshapley.judge.mock import PlantedChatBackend
from maxshapley.judge.prompts import PromptTemplates
from maxshapley.judge.utility import JudgeUtility
from maxshapley.ledger import TokenLedger
from maxshapley.pipeline import AttributionResult, MaxSumGame, PipelineConfig, ValueMatrix, run_maxshapley
from maxshapley.seeding import derive_seed

logger = logging.getLogger(__name__)

METHOD_NAMES = ("maxshapley", "fullshapley", "mcu", "mca", "kernelshap", "loo")
DEFAULT_BUDGETS = {"mcu": 16, "mca": 8, "kernelshap": 32}
REFERENCE_METHOD = "fullshapley"
STAGE_ROLES = {"answer": "search", "coalition_answer": "search", "judge": "judge",
               "keypoints": "attribution", "distill": "attribution", "relevance": "attribution"}


@dataclass(frozen=True)
class MethodSpec:
    """A method name plus its sampling budget, written ``name`` or ``name:budget``."""

    name: str
    budget: int | str | None = None

    @classmethod
    def parse(cls, text: str) -> "MethodSpec":
        name, _, budget = text.strip().lower().partition(":")
        if name not in METHOD_NAMES:
            raise UsageError(f"unknown method {text!r}; valid methods: {', '.join(METHOD_NAMES)}")
        if not budget:
            return cls(name, DEFAULT_BUDGETS.get(name))
        if name not in DEFAULT_BUDGETS:
            raise UsageError(f"method {name!r} takes no budget")
        if name == "kernelshap" and budget == "all":
            return cls(name, ALL)
        try:
            value = int(budget)
        except ValueError:
            raise UsageError(f"budget for {name!r} must be an integer, got {budget!r}") from None
        if value < 1:
            raise UsageError(f"budget for {name!r} must be positive")
        return cls(name, value)

    @property
    def label(self) -> str:
        if self.budget is None:
            return self.name
        return f"{self.name}:{str(self.budget).lower()}"


def parse_methods(methods: Sequence[str | MethodSpec]) -> list[MethodSpec]:
    specs = [m if isinstance(m, MethodSpec) else MethodSpec.parse(m) for m in methods]
    if not specs:
        raise UsageError("at least one method is required")
    labels = [s.label for s in specs]
    if len(set(labels)) != len(labels):
        raise UsageError(f"duplicate methods in {labels}")
    return specs


# -- oracle bundles -------------------------------------------------------------


class OracleBundle:
    """Supplies the baseline utility and the keypoint-pipeline run for a sample."""

    def utility(self, sample: AnnotatedSample, seed: int) -> UtilityOracle:
        raise NotImplementedError

    def maxshapley(self, sample: AnnotatedSample, seed: int, config: PipelineConfig,
                   answer: str | None = None) -> AttributionResult:
        raise NotImplementedError

    def cost(self, ledger: TokenLedger) -> float:
        return 0.0

    def describe(self) -> dict:
        return {"kind": type(self).__name__}


class ChatBundle(OracleBundle):
    """Chat-model roles: ``search`` answers, ``judge`` grades, ``attribution`` runs the pipeline.

    Baseline utilities show the reference answer to the judge when the sample
    has one and ``use_ground_truth`` is set; the keypoint pipeline never sees it.
    """

    def __init__(self, search: ChatBackend, judge: ChatBackend | None = None,
                 attribution: ChatBackend | None = None, endpoints: Mapping[str, EndpointConfig] | None = None,
                 templates: PromptTemplates | None = None, empty_value: float | None = None,
                 use_ground_truth: bool = True):
        self.backends = {"search": search, "judge": judge or search, "attribution": attribution or search}
        self.endpoints = dict(endpoints or {})
        self.templates = templates or PromptTemplates()
        self.empty_value = empty_value
        self.use_ground_truth = use_ground_truth

    def agent(self, role: str) -> PromptedAgent:
        return PromptedAgent(self.backends[role], self.templates)

    def utility(self, sample, seed):
        truth = sample.reference_answer if self.use_ground_truth else None
        return JudgeUtility(sample.query, sample.sources, self.agent("search"), self.agent("judge"),
                            ground_truth=truth, seed=seed, empty_value=self.empty_value)

    def maxshapley(self, sample, seed, config, answer=None):
        return run_maxshapley(sample.query, sample.sources, self.agent("attribution"), answer=answer,
                              search=self.agent("search"), config=dataclasses.replace(config, shuffle_seed=seed),
                              query_id=sample.query_id)

    def cost(self, ledger):
        total = 0.0
        for stage, usage in ledger.by_stage.items():
            endpoint = self.endpoints.get(STAGE_ROLES.get(stage, "search"))
            if endpoint is not None:
                part = TokenLedger()
                part.record(stage, usage.tokens_in, usage.tokens_out, usage.calls)
                total += estimate_cost(part, endpoint)
        return total

    def describe(self):
        return {"kind": "chat", "endpoints": {k: v.to_dict() for k, v in sorted(self.endpoints.items())},
                "empty_value": self.empty_value, "use_ground_truth": self.use_ground_truth}


class PlantedBundle(OracleBundle):
    """Synthetic bundle whose utility is the sum-max game of a planted value matrix.

    The keypoint pipeline runs unchanged against a mock model that reports the
    planted keypoints and scores, so both sides share the same ground truth.
    """

    def __init__(self, matrices: Mapping[str, ValueMatrix]):
        self.matrices = dict(matrices)

    def _matrix(self, sample) -> ValueMatrix:
        try:
            return self.matrices[sample.query_id]
        except KeyError:
            raise UsageError(f"no planted matrix for query {sample.query_id!r}") from None

    def utility(self, sample, seed):
        return MaxSumGame(self._matrix(sample))

    def maxshapley(self, sample, seed, config, answer=None):
        vm = self._matrix(sample)
        rows = {sid: vm.scores[i].tolist() for i, sid in enumerate(vm.source_ids)}
        backend = PlantedChatBackend({sample.query: (list(vm.keypoints.points), rows)})
        return run_maxshapley(sample.query, sample.sources, PromptedAgent(backend), answer=answer or "planted answer",
                              config=dataclasses.replace(config, shuffle_seed=seed), query_id=sample.query_id)

    def describe(self):
        return {"kind": "planted", "queries": sorted(self.matrices)}


# -- running --------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    runs: int = 3
    seed: int = 0
    clipping_threshold: float = 0.05
    clip_maxshapley: bool = False
    canonical_cache: bool = True
    parallelism: int = 1
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)

    def __post_init__(self):
        if self.runs < 1:
            raise UsageError("runs must be >= 1")
        if self.parallelism < 1:
            raise UsageError("parallelism must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class SampleRecord:
    method: str
    query_id: str
    run: int
    seed: int
    m: int
    k: int
    phi: list[float] | None = None
    phi_unclipped: list[float] | None = None
    clipped: bool = False
    degenerate: bool = False
    tokens_in: int = 0
    tokens_out: int = 0
    oracle_calls: int = 0
    cost: float = 0.0
    jaccard: float | None = None
    tau_b: float | None = None
    error: str | None = None
    flags: list[str] = field(default_factory=list)
    runtime: float = field(default=0.0, repr=False)

    @property
    def tokens(self) -> int:
        return self.tokens_in + self.tokens_out

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        del d["runtime"]
        return d


@dataclass
class MethodSummary:
    method: str
    n_samples: int
    runs: int
    mean_jaccard: float
    stderr_jaccard: float
    mean_tau_b: float
    stderr_tau_b: float
    mean_tokens: float
    mean_tokens_in: float
    mean_tokens_out: float
    mean_oracle_calls: float
    mean_cost: float
    mean_runtime: float
    n_failed: int
    n_k0_excluded: int
    n_tau_undefined: int


SUMMARY_COLUMNS = [f.name for f in dataclasses.fields(MethodSummary) if f.name != "mean_runtime"]


@dataclass
class ExperimentReport:
    summaries: list[MethodSummary]
    records: list[SampleRecord]
    metadata: dict

    def summary(self, method: str) -> MethodSummary:
        for s in self.summaries:
            if s.method == method:
                return s
        raise KeyError(method)

    def records_for(self, method: str) -> list[SampleRecord]:
        return [r for r in self.records if r.method == method]


def run_job(spec: MethodSpec, sample: AnnotatedSample, run: int, bundle: OracleBundle,
             config: ExperimentConfig, cache: UtilityCache) -> SampleRecord:
    seed = derive_seed(config.seed, sample.query_id, run)
    rec = SampleRecord(spec.label, sample.query_id, run, seed, sample.m, sample.k)
    start = time.perf_counter()
    ledger = TokenLedger()
    try:
        if spec.name == "maxshapley":
            result = bundle.maxshapley(sample, seed, config.pipeline)
            raw, ledger, calls = result.unclipped or result.attribution, result.ledger, result.ledger.calls
            rec.flags = list(result.flags)
            clip = config.clip_maxshapley
        else:
            inner = bundle.utility(sample, seed)
            oracle = CachedOracle(inner, cache, sample.query_id, f"{spec.label}/run{run}",
                                  canonicalize=config.canonical_cache)
            raw = _baseline(spec, oracle, sample.m, seed)
            ledger, calls = inner.ledger, inner.call_count
            clip = True
        final = clip_and_renormalize(raw, config.clipping_threshold) if clip else raw
        rec.phi, rec.phi_unclipped = final.tolist(), raw.tolist()
        rec.clipped, rec.degenerate = final.clipped, final.degenerate
        rec.oracle_calls = calls
    except MaxShapleyError as exc:
        logger.warning("%s failed on %s run %d: %s", spec.label, sample.query_id, run, exc)
        rec.error = f"{exc.category}: {exc}"
    rec.tokens_in, rec.tokens_out = ledger.tokens_in, ledger.tokens_out
    rec.cost = bundle.cost(ledger)
    rec.runtime = time.perf_counter() - start
    return rec


def _baseline(spec: MethodSpec, oracle, m: int, seed: int) -> AttributionVector:
    if spec.name == "fullshapley":
        return full_shapley(oracle, m)
    if spec.name == "loo":
        return leave_one_out(oracle, m)
    if spec.name == "mcu":
        return mc_uniform_shapley(oracle, m, spec.budget, seed)
    if spec.name == "mca":
        return mc_antithetic_shapley(oracle, m, spec.budget, seed)
    if spec.name == "kernelshap":
        return kernel_shap(oracle, m, spec.budget, seed=seed)
    raise UsageError(f"unknown method {spec.name!r}")


def _mean_stderr(per_run: list[float]) -> tuple[float, float]:
    vals = np.array([v for v in per_run if not math.isnan(v)])
    if vals.size == 0:
        return math.nan, math.nan
    if vals.size < 2:
        return float(vals.mean()), math.nan
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))


def _score(records: list[SampleRecord], samples: Mapping[str, AnnotatedSample], reference: str | None) -> None:
    ref = {(r.query_id, r.run): r for r in records if r.method == reference and r.phi is not None}
    for rec in records:
        if rec.phi is None:
            continue
        try:
            rec.jaccard = jaccard_at_k(rec.phi, samples[rec.query_id].relevance)
        except UndefinedMetricError:
            rec.jaccard = None
        other = ref.get((rec.query_id, rec.run))
        if other is not None and rec.method != reference and rec.m >= 2:
            try:
                rec.tau_b = kendall_tau_b(rec.phi, other.phi)
            except UndefinedMetricError:
                rec.tau_b = None


def _summarize(label: str, recs: list[SampleRecord], n_samples: int, runs: int, has_ref: bool) -> MethodSummary:
    per_run_j, per_run_t = [], []
    for run in range(runs):
        js = [r.jaccard for r in recs if r.run == run and r.jaccard is not None]
        ts = [r.tau_b for r in recs if r.run == run and r.tau_b is not None]
        per_run_j.append(float(np.mean(js)) if js else math.nan)
        per_run_t.append(float(np.mean(ts)) if ts else math.nan)
    mj, sj = _mean_stderr(per_run_j)
    mt, st = _mean_stderr(per_run_t)
    denom = n_samples * runs
    ok = [r for r in recs if r.error is None]
    return MethodSummary(
        method=label, n_samples=n_samples, runs=runs,
        mean_jaccard=mj, stderr_jaccard=sj, mean_tau_b=mt, stderr_tau_b=st,
        mean_tokens=sum(r.tokens for r in recs) / denom,
        mean_tokens_in=sum(r.tokens_in for r in recs) / denom,
        mean_tokens_out=sum(r.tokens_out for r in recs) / denom,
        mean_oracle_calls=sum(r.oracle_calls for r in recs) / denom,
        mean_cost=sum(r.cost for r in recs) / denom,
        mean_runtime=sum(r.runtime for r in recs) / denom,
        n_failed=len(recs) - len(ok),
        n_k0_excluded=sum(1 for r in ok if r.k == 0),
        n_tau_undefined=sum(1 for r in ok if has_ref and label != REFERENCE_METHOD and r.tau_b is None),
    )


def run_experiment(samples: Sequence[AnnotatedSample], methods: Sequence[str | MethodSpec], bundle: OracleBundle,
                   config: ExperimentConfig | None = None, cache: UtilityCache | None = None) -> ExperimentReport:
    """Attribute every sample with every method, ``config.runs`` times.

    Clipping applies to the baselines and, only if ``clip_maxshapley`` is set,
    to the keypoint pipeline. Kendall tau_b compares each method with the
    FullShapley vector of the same sample and run, when FullShapley is listed.
    A method that fails on a sample (for example FullShapley above its player
    cap) is recorded with its error and the experiment continues.
    """
    config = config or ExperimentConfig()
    specs = parse_methods(methods)
    cache = cache or UtilityCache()
    by_id = {s.query_id: s for s in samples}
    jobs = [(spec, sample, run) for spec in specs for sample in samples for run in range(config.runs)]

    if config.parallelism > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            records = list(pool.map(lambda job: run_job(*job, bundle, config, cache), jobs))
    else:
        records = [run_job(*job, bundle, config, cache) for job in jobs]
    records.sort(key=lambda r: (r.method, r.query_id, r.run))

    reference = REFERENCE_METHOD if any(s.name == REFERENCE_METHOD and s.label == REFERENCE_METHOD
                                        for s in specs) else None
    _score(records, by_id, reference)
    summaries = [_summarize(s.label, [r for r in records if r.method == s.label], len(samples), config.runs,
                            reference is not None) for s in specs]
    meta = {
        "methods": [s.label for s in specs],
        "n_samples": len(samples),
        "config": config.to_dict(),
        "bundle": bundle.describe(),
        "tau_reference": reference,
        "cache": {"hits": cache.hits, "misses": cache.misses, "io_failures": cache.io_failures},
    }
    meta["config_hash"] = hashlib.sha256(
        json.dumps({k: meta[k] for k in ("methods", "config", "bundle")}, sort_keys=True).encode()
    ).hexdigest()
    return ExperimentReport(summaries, records, meta)


# -- output files -----------------------------------------------------------------


def _num(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def _finite_or_none(x: float):
    return None if isinstance(x, float) and math.isnan(x) else x


def write_report(report: ExperimentReport, out_dir: str | Path) -> dict[str, Path]:
    """Write summary.csv, records.jsonl, plot_data.json and timings.csv.

    Wall-clock times go only to timings.csv, so the other three files are a
    pure function of configuration, seeds and oracle responses.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in ("summary.csv", "records.jsonl", "plot_data.json", "timings.csv")}

    with paths["summary.csv"].open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for s in report.summaries:
            writer.writerow([_num(getattr(s, c)) for c in SUMMARY_COLUMNS])

    with paths["records.jsonl"].open("w", encoding="utf-8") as fh:
        for rec in report.records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")

    plot = {}
    for s in report.summaries:
        recs = report.records_for(s.method)
        runs = sorted({r.run for r in recs})
        plot[s.method] = {
            "points": [{
                "run": run,
                "mean_tokens": float(np.mean([r.tokens for r in recs if r.run == run])),
                "mean_jaccard": _finite_or_none(float(np.mean(js))) if (js := [
                    r.jaccard for r in recs if r.run == run and r.jaccard is not None]) else None,
                "mean_tau_b": _finite_or_none(float(np.mean(ts))) if (ts := [
                    r.tau_b for r in recs if r.run == run and r.tau_b is not None]) else None,
            } for run in runs],
            "jaccard_cdf": sorted(r.jaccard for r in recs if r.jaccard is not None),
            "tau_b_cdf": sorted(r.tau_b for r in recs if r.tau_b is not None),
        }
    paths["plot_data.json"].write_text(json.dumps(plot, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    with paths["timings.csv"].open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "query_id", "run", "runtime_seconds"])
        for rec in report.records:
            writer.writerow([rec.method, rec.query_id, rec.run, f"{rec.runtime:.6f}"])
        for s in report.summaries:
            writer.writerow([s.method, "*mean*", "", f"{s.mean_runtime:.6f}"])
    return paths
