"""Run configuration: defaults, config files and flag overrides.

Precedence is flags over file values over defaults. Endpoint settings are
grouped by role (``search``, ``judge``, ``attribution``); a role that is not
configured falls back to the ``search`` endpoint. API keys are never part of a
configuration, only the name of the environment variable holding them.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from maxshapley.errors import UsageError
from maxshapley.evaluation.experiment import ExperimentConfig, MethodSpec, parse_methods
from maxshapley.judge.endpoints import EndpointConfig
from maxshapley.pipeline import PipelineConfig

ROLES = ("search", "judge", "attribution")
MODES = ("live", "record", "replay")
DEMO_DATASET = "demo"
_SECRET_MARKERS = ("api_key", "secret", "password", "authorization", "access_token", "bearer")
_SECRET_ALLOWED = {"api_key_env"}


@dataclass
class RunConfig:
    command: str = "attribute"
    methods: list[str] = field(default_factory=lambda: ["maxshapley"])
    dataset: str | None = None
    schema: str = "binary"
    query_id: str | None = None
    answer: str | None = None
    runs: int = 3
    seed: int = 0
    clipping_threshold: float = 0.05
    clip_maxshapley: bool = False
    temperature: float = 0.0
    distill: bool = True
    parallelism: int = 1
    keypoint_cap: int = 32
    canonical_cache: bool = True
    empty_value: float | None = None
    use_ground_truth: bool = True
    out: str = "maxshapley-out"
    mode: str = "record"
    transcripts: str | None = None
    templates: str | None = None
    mock_answer_mode: str = "extractive"
    endpoints: dict[str, EndpointConfig] = field(default_factory=dict)

    def method_specs(self) -> list[MethodSpec]:
        return parse_methods(self.methods)

    def endpoint(self, role: str) -> EndpointConfig:
        return self.endpoints.get(role) or self.endpoints.get("search") or EndpointConfig(temperature=self.temperature)

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(distill=self.distill, clip=self.clip_maxshapley,
                              clipping_threshold=self.clipping_threshold, parallelism=self.parallelism,
                              shuffle_seed=self.seed, keypoint_cap=self.keypoint_cap)

    def experiment_config(self) -> ExperimentConfig:
        return ExperimentConfig(runs=self.runs, seed=self.seed, clipping_threshold=self.clipping_threshold,
                                clip_maxshapley=self.clip_maxshapley, canonical_cache=self.canonical_cache,
                                pipeline=self.pipeline_config())

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def transcript_dir(self) -> Path:
        return Path(self.transcripts) if self.transcripts else self.out_dir / "transcripts"

    def dataset_path(self) -> Path:
        if self.dataset is None:
            raise UsageError(f"command '{self.command}' needs --dataset (a JSONL file or '{DEMO_DATASET}')")
        if self.dataset == DEMO_DATASET:
            return Path(str(resources.files("maxshapley").joinpath("data", "demo.jsonl")))
        path = Path(self.dataset)
        if not path.is_file():
            raise UsageError(f"dataset {path} does not exist")
        return path

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "endpoints"}
        d["endpoints"] = {role: self.endpoint(role).to_dict() for role in ROLES}
        return d

    def snapshot(self) -> dict:
        """Resolved configuration with anything secret-looking redacted."""
        d = redact(self.to_dict())
        d["transcripts"] = str(self.transcript_dir.resolve())
        if self.dataset is not None and self.dataset != DEMO_DATASET:
            d["dataset"] = str(Path(self.dataset).resolve())
        return d


def redact(value: Any) -> Any:
    if isinstance(value, Mapping):
        out = {}
        for k, v in value.items():
            secret = any(mark in str(k).lower() for mark in _SECRET_MARKERS) and k not in _SECRET_ALLOWED
            out[k] = "***REDACTED***" if secret else redact(v)
        return out
    if isinstance(value, list):
        return [redact(v) for v in value]
    return value


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file {path} does not exist")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise UsageError(f"config file {path} does not parse: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a mapping")
    return data


def _check_value(name: str, value: Any) -> Any:
    kinds = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    if name == "methods":
        if isinstance(value, str):
            value = [value]
        methods = [part.strip() for item in value for part in str(item).split(",") if part.strip()]
        parse_methods(methods)
        return methods
    if value is None:
        return None
    kind = kinds[name]
    try:
        if kind == "int":
            if isinstance(value, bool) or int(value) != float(value):
                raise ValueError
            return int(value)
        if kind in ("float", "float | None"):
            return float(value)
        if kind == "bool":
            if not isinstance(value, bool):
                raise ValueError
            return value
    except (TypeError, ValueError):
        raise UsageError(f"config value {name}={value!r} has the wrong type ({kind})") from None
    return str(value) if kind.startswith("str") else value


def _endpoints(raw: Any, temperature: float, force_temperature: bool) -> dict[str, EndpointConfig]:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise UsageError("'endpoints' must map role names to endpoint settings")
    unknown = set(raw) - set(ROLES)
    if unknown:
        raise UsageError(f"unknown endpoint roles {sorted(unknown)}; expected {ROLES}")
    out = {}
    for role, settings in raw.items():
        if isinstance(settings, EndpointConfig):
            settings = settings.to_dict()
        settings = dict(settings or {})
        if force_temperature or "temperature" not in settings:
            settings["temperature"] = temperature
        out[role] = EndpointConfig.from_dict(settings)
    if "search" not in out:
        out["search"] = EndpointConfig(temperature=temperature)
    return out


def parse_config(file: str | Path | Mapping | None = None, flags: Mapping[str, Any] | None = None) -> RunConfig:
    """Merge defaults, an optional config file (JSON or YAML) and flag overrides.

    ``flags`` entries that are ``None`` count as not given.

    Raises:
        UsageError: unknown keys, wrong types, unknown methods or modes.
    """
    values: dict[str, Any] = {}
    if file is not None:
        values.update(file if isinstance(file, Mapping) else load_config_file(file))
    given_flags = {k: v for k, v in (flags or {}).items() if v is not None}
    values.update(given_flags)

    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(values) - known
    secret_keys = [k for k in unknown if any(mark in k.lower() for mark in _SECRET_MARKERS)]
    if secret_keys:
        raise UsageError(f"{sorted(secret_keys)}: API keys must come from environment variables (set api_key_env)")
    if unknown:
        raise UsageError(f"unknown config keys {sorted(unknown)}")

    kwargs = {k: _check_value(k, v) for k, v in values.items() if k != "endpoints"}
    config = RunConfig(**kwargs)
    config.endpoints = _endpoints(values.get("endpoints"), config.temperature, "temperature" in given_flags)
    validate(config)
    return config


def validate(config: RunConfig) -> None:
    if config.mode not in MODES:
        raise UsageError(f"unknown mode {config.mode!r}; expected one of {MODES}")
    if config.mock_answer_mode not in ("concat", "extractive"):
        raise UsageError("mock_answer_mode must be 'concat' or 'extractive'")
    if config.runs < 1:
        raise UsageError("runs must be >= 1")
    if config.temperature < 0:
        raise UsageError("temperature must be >= 0")
    if config.clipping_threshold < 0:
        raise UsageError("clipping_threshold must be >= 0")
    if config.parallelism < 1:
        raise UsageError("parallelism must be >= 1")
    if not 1 <= config.keypoint_cap <= 32:
        raise UsageError("keypoint_cap must lie in [1, 32]")
    if config.templates is not None and not Path(config.templates).is_dir():
        raise UsageError(f"templates directory {config.templates} does not exist")
    if config.mode == "replay":
        for role in ROLES:
            path = config.transcript_dir / f"{role}.jsonl"
            if not path.is_file():
                raise UsageError(f"replay transcript {path} does not exist")


def write_snapshot(config: RunConfig, out_dir: str | Path | None = None) -> Path:
    out = Path(out_dir) if out_dir is not None else config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.json"
    path.write_text(json.dumps(config.snapshot(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
