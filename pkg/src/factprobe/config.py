"""Run configuration: a versioned YAML file of nested key-value settings.

Relative paths are resolved against the config file's directory, so a run
directory can be moved or mounted elsewhere without edits. The config
digest is taken over the canonical JSON form of the parsed content, which
makes it stable under key reordering and comments.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .corpus import is_language_code
from .errors import ConfigError
from .metrics import DEFAULT_N_VALUES
from .split import MatchConfig

CONFIG_VERSION = 1

SOURCE_ORDER = ("TEMPLATE", "MT", "LLM")


@dataclass(frozen=True)
class ClientSettings:
    """One translation/LLM/QE client. ``mode`` is live, record or replay."""

    client_id: str
    mode: str = "replay"
    endpoint: str | None = None
    model: str | None = None
    auth_env: str | None = None
    fixtures: tuple[str, ...] = ()
    record_fixtures: str | None = None


@dataclass(frozen=True)
class ScorerSettings:
    """Scorer backend. ``protocol`` talks to an external inference server;
    ``oracle`` and ``table`` are in-process fixture backends."""

    backend: str = "oracle"
    mode: str = "perfect"  # oracle backend: perfect | adversarial
    host: str = "127.0.0.1"
    port: int = 0
    fixtures: str | None = None  # table backend: JSONL of scored continuations


@dataclass(frozen=True)
class RunConfig:
    languages: tuple[str, ...]
    sources: tuple[str, ...]
    salt: str
    output_dir: Path
    entities_path: Path
    relations_path: Path
    facts_path: Path
    exemplars_dir: Path | None = None
    cache_dir: Path | None = None
    min_unique_objects: int = 10
    exclude_relations: tuple[str, ...] = ()
    k_distractors: int = 50
    n_values: tuple[int, ...] = DEFAULT_N_VALUES
    normalization: str = "SUM"
    include_aliases: bool = False
    include_english: bool = False
    flip_inflection_delta_sign: bool = False
    no_space_languages: tuple[str, ...] = ()
    match: MatchConfig = field(default_factory=MatchConfig)
    mt: ClientSettings | None = None
    llm: ClientSettings | None = None
    qe: ClientSettings | None = None
    scorer: ScorerSettings = field(default_factory=ScorerSettings)
    gender_patterns_path: Path | None = None
    report_max_rank_bucket: int = 50
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    def digest(self) -> str:
        canonical = json.dumps(self.raw, ensure_ascii=False, sort_keys=True,
                               separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _client_settings(data: dict | None, default_id: str, base: Path) -> ClientSettings | None:
    if data is None:
        return None
    mode = data.get("mode", "replay")
    if mode not in ("live", "record", "replay"):
        raise ConfigError(f"client mode must be live/record/replay, got {mode!r}")
    fixtures = tuple(str(base / p) for p in data.get("fixtures", []))
    record_fixtures = data.get("record_fixtures")
    return ClientSettings(
        client_id=data.get("client_id", default_id),
        mode=mode,
        endpoint=data.get("endpoint"),
        model=data.get("model"),
        auth_env=data.get("auth_env"),
        fixtures=fixtures,
        record_fixtures=str(base / record_fixtures) if record_fixtures else None,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    if data.get("config_version") != CONFIG_VERSION:
        raise ConfigError(
            f"unsupported config_version {data.get('config_version')!r}"
        )
    base = path.parent

    def resolve(key: str, required: bool = True) -> Path | None:
        value = data.get(key)
        if value is None:
            if required:
                raise ConfigError(f"config key {key!r} is required")
            return None
        return (base / str(value)).resolve()

    languages = tuple(data.get("languages", ()))
    if not languages:
        raise ConfigError("at least one language is required")
    for lang in languages:
        if not is_language_code(lang):
            raise ConfigError(f"bad language code {lang!r}")
    sources = tuple(data.get("sources", ("TEMPLATE",)))
    if not sources:
        raise ConfigError("at least one verbalization source must be enabled")
    for source in sources:
        if source not in SOURCE_ORDER:
            raise ConfigError(f"unknown verbalization source {source!r}")
    sources = tuple(s for s in SOURCE_ORDER if s in sources)
    salt = data.get("salt", "")
    if not isinstance(salt, str) or not salt:
        raise ConfigError("salt must be a non-empty string")
    k = int(data.get("k_distractors", 50))
    if k < 1:
        raise ConfigError("k_distractors must be >= 1")
    n_values = tuple(int(n) for n in data.get("n_values", DEFAULT_N_VALUES))
    if any(n < 1 for n in n_values):
        raise ConfigError("n_values must all be >= 1")
    normalization = data.get("normalization", "SUM")
    if normalization not in ("SUM", "MEAN"):
        raise ConfigError(f"normalization must be SUM or MEAN, got {normalization!r}")

    match_data = data.get("match", {}) or {}
    try:
        match = MatchConfig(
            min_prefix_ratio=float(match_data.get("min_prefix_ratio", 0.6)),
            min_prefix_chars=int(match_data.get("min_prefix_chars", 3)),
            max_suffix_delta=int(match_data.get("max_suffix_delta", 4)),
            lemmatizer=match_data.get("lemmatizer"),
        )
    except ValueError as exc:
        raise ConfigError(f"bad match config: {exc}") from exc

    scorer_data = data.get("scorer", {}) or {}
    backend = scorer_data.get("backend", "oracle")
    if backend not in ("oracle", "table", "protocol"):
        raise ConfigError(f"unknown scorer backend {backend!r}")
    scorer_fixtures = scorer_data.get("fixtures")
    scorer = ScorerSettings(
        backend=backend,
        mode=scorer_data.get("mode", "perfect"),
        host=scorer_data.get("host", "127.0.0.1"),
        port=int(scorer_data.get("port", 0)),
        fixtures=str(base / scorer_fixtures) if scorer_fixtures else None,
    )

    return RunConfig(
        languages=languages,
        sources=sources,
        salt=salt,
        output_dir=resolve("output_dir"),
        entities_path=resolve("entities"),
        relations_path=resolve("relations"),
        facts_path=resolve("facts"),
        exemplars_dir=resolve("exemplars_dir", required=False),
        cache_dir=resolve("cache_dir", required=False),
        min_unique_objects=int(data.get("min_unique_objects", 10)),
        exclude_relations=tuple(data.get("exclude_relations", ())),
        k_distractors=k,
        n_values=n_values,
        normalization=normalization,
        include_aliases=bool(data.get("include_aliases", False)),
        include_english=bool(data.get("include_english", False)),
        flip_inflection_delta_sign=bool(data.get("flip_inflection_delta_sign", False)),
        no_space_languages=tuple(data.get("no_space_languages", ())),
        match=match,
        mt=_client_settings(data.get("mt"), "mt", base),
        llm=_client_settings(data.get("llm"), "llm", base),
        qe=_client_settings(data.get("qe"), "qe", base),
        scorer=scorer,
        gender_patterns_path=resolve("gender_patterns", required=False),
        report_max_rank_bucket=int(data.get("report_max_rank_bucket", 50)),
        raw=data,
    )
