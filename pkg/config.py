""" Loads the YAML configuration shared by every subcommand.

A minimal configuration names a backend for each agent role:

backends:
  tool:      {kind: remote, base_url: http://localhost:8000, model: phi3-tools}
  workflow:  {kind: remote, base_url: http://localhost:8001, model: phi3}
  reasoning: {kind: remote, base_url: http://localhost:8001, model: phi3}
  embedding: {kind: hash, dim: 64}

Everything else falls back to DEFAULTS. Relative paths are taken from the working
directory. API keys are never read from the file: each remote backend names the
environment variable holding its key (`api_key_env`).
"""
from copy import deepcopy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional
import yaml
from loguru import logger
from gateway import DEFAULT_API_KEY_ENV, BackendSpec, ChatBackend, GenConfig, build_backend
from orchestrator import PROMPTS_DIRECTORY, OrchestratorError, PipelineConfig, PipelineDeps, load_prompts
from vector_index import (
    ChunkPolicy,
    EmbeddingBackend,
    HashEmbeddingBackend,
    IndexSnapshot,
    RemoteEmbeddingBackend,
    load_index,
)

VERSION = "0.3.0"

CHAT_ROLES = ("tool", "workflow", "reasoning", "classifier")
REQUIRED_ROLES = ("tool", "workflow", "reasoning")

DEFAULTS = {
    "backends": {"embedding": {"kind": "hash", "dim": 64, "max_batch": 1000}},
    "pipeline": {
        "threshold": 4,
        "max_rounds": 3,
        "retrieval_k": 1,
        "return_last": False,
        "forward_citations": False,
    },
    "gen": {"temperature": 0.1, "max_new_tokens": 1000, "stop": None},
    "paths": {
        "index": "data/index.json",
        "traces": "data/traces",
        "prompts": str(PROMPTS_DIRECTORY),
        "dataset": "data/finetune.jsonl",
        "tools": "data/tools.json",
        "biostars": None,
        "nfcore": None,
        "help": None,
        "ontologies": [],
        "output": "data/output",
    },
    "ingest": {
        "min_upvotes": 1,
        "top_n": 50,
        "registry_url": "https://api.biocontainers.pro/ga4gh/trs/v2",
        "help_provider": "container",
        "max_in_flight": 4,
        "token_cap": 1000,
    },
    "index": {"max_chars": 1200, "overlap_chars": 200},
    "service": {"host": "127.0.0.1", "port": 8080},
}


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class EmbeddingSpec:
    kind: str = "hash"  # hash | remote
    base_url: str = ""
    model: str = "text-embedding-ada-002"
    dim: Optional[int] = 64
    max_batch: int = 1000
    timeout: float = 60.0
    retries: int = 2
    api_key_env: str = DEFAULT_API_KEY_ENV


@dataclass(frozen=True)
class PathsConfig:
    index: str
    traces: str
    prompts: str
    dataset: str
    tools: str
    output: str
    biostars: Optional[str] = None
    nfcore: Optional[str] = None
    help: Optional[str] = None
    ontologies: tuple = ()


@dataclass(frozen=True)
class IngestConfig:
    min_upvotes: int = 1
    top_n: int = 50
    registry_url: str = ""
    help_provider: str = "container"  # container | fixture
    max_in_flight: int = 4
    token_cap: int = 1000


@dataclass(frozen=True)
class AppConfig:
    backends: Dict[str, BackendSpec]
    embedding: EmbeddingSpec
    pipeline: PipelineConfig
    gen: GenConfig
    paths: PathsConfig
    ingest: IngestConfig
    chunk_policy: ChunkPolicy
    host: str = "127.0.0.1"
    port: int = 8080
    source: Optional[str] = None
    raw: dict = field(default_factory=dict, repr=False)


def _merge(defaults: dict, overrides: dict) -> dict:
    merged = deepcopy(defaults)
    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _backend_spec(role: str, section: dict) -> BackendSpec:
    if not isinstance(section, dict):
        raise ConfigError(f"backends.{role} must be a mapping")
    script = section.get("script") or {}
    if isinstance(script, list):
        script = {"queue": script}
    try:
        return BackendSpec(
            kind=section.get("kind", "remote"),
            base_url=section.get("base_url", ""),
            model=section.get("model", ""),
            timeout=float(section.get("timeout_ms", 60000)) / 1000.0,
            retries=int(section.get("retries", 2)),
            api_key_env=section.get("api_key_env", DEFAULT_API_KEY_ENV),
            queue=tuple(str(reply) for reply in script.get("queue", [])),
            table={str(k): str(v) for k, v in (script.get("table") or {}).items()},
            default=None if script.get("default") is None else str(script["default"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"backends.{role}: {exc}") from exc


def _embedding_spec(section: dict) -> EmbeddingSpec:
    kind = section.get("kind", "hash")
    if kind not in ("hash", "remote"):
        raise ConfigError(f"backends.embedding.kind must be hash or remote, got {kind!r}")
    if kind == "remote" and not section.get("base_url"):
        raise ConfigError("backends.embedding requires base_url for a remote backend")
    try:
        return EmbeddingSpec(
            kind=kind,
            base_url=section.get("base_url", ""),
            model=section.get("model", "text-embedding-ada-002"),
            dim=None if section.get("dim") is None else int(section["dim"]),
            max_batch=int(section.get("max_batch", 1000)),
            timeout=float(section.get("timeout_ms", 60000)) / 1000.0,
            retries=int(section.get("retries", 2)),
            api_key_env=section.get("api_key_env", DEFAULT_API_KEY_ENV),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"backends.embedding: {exc}") from exc


def parse_config(data: Optional[dict], source: Optional[str] = None) -> AppConfig:
    if data is not None and not isinstance(data, dict):
        raise ConfigError("the configuration must be a mapping")
    data = _merge(DEFAULTS, data or {})

    unknown = set(data) - set(DEFAULTS)
    if unknown:
        logger.warning("IGNORING UNKNOWN CONFIG SECTIONS: {}", ", ".join(sorted(unknown)))

    backends = {}
    for role, section in data["backends"].items():
        if role == "embedding":
            continue
        if role not in CHAT_ROLES:
            raise ConfigError(f"unknown backend role {role!r}; roles are {', '.join(CHAT_ROLES)}, embedding")
        backends[role] = _backend_spec(role, section)

    try:
        gen = GenConfig(
            temperature=float(data["gen"]["temperature"]),
            max_new_tokens=int(data["gen"]["max_new_tokens"]),
            stop=tuple(data["gen"]["stop"]) if data["gen"].get("stop") else None,
        )
        pipeline = PipelineConfig(
            threshold=int(data["pipeline"]["threshold"]),
            max_rounds=int(data["pipeline"]["max_rounds"]),
            retrieval_k=int(data["pipeline"]["retrieval_k"]),
            prompts=load_prompts(data["paths"]["prompts"]),
            gen=gen,
            return_last=bool(data["pipeline"]["return_last"]),
            forward_citations=bool(data["pipeline"]["forward_citations"]),
        )
        chunk_policy = ChunkPolicy(int(data["index"]["max_chars"]), int(data["index"]["overlap_chars"]))
        if not chunk_policy.max_chars > chunk_policy.overlap_chars >= 0:
            raise ValueError("index.max_chars must exceed index.overlap_chars >= 0")
        ingest = IngestConfig(**{key: data["ingest"][key] for key in IngestConfig.__dataclass_fields__})
        if ingest.help_provider not in ("container", "fixture"):
            raise ValueError("ingest.help_provider must be container or fixture")
        paths_section = dict(data["paths"])
        paths_section["ontologies"] = tuple(paths_section.get("ontologies") or ())
        paths = PathsConfig(**{key: paths_section.get(key) for key in PathsConfig.__dataclass_fields__})
        port = int(data["service"]["port"])
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    except OrchestratorError as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from exc

    return AppConfig(
        backends=backends,
        embedding=_embedding_spec(data["backends"]["embedding"]),
        pipeline=pipeline,
        gen=gen,
        paths=paths,
        ingest=ingest,
        chunk_policy=chunk_policy,
        host=str(data["service"]["host"]),
        port=port,
        source=source,
        raw=data,
    )


def load_config(filepath: Optional[str] = None) -> AppConfig:
    """ No filepath means defaults only. """
    if filepath is None:
        return parse_config({})
    path = Path(filepath)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    logger.debug("READING {}", path)
    with open(path, "r", encoding="utf-8") as config_handle:
        try:
            data = yaml.load(config_handle, Loader=yaml.SafeLoader)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
    return parse_config(data, source=str(path))


def require_paths(config: AppConfig, *names: str) -> List[Path]:
    """ Checks up front that the named `paths.*` entries are set and exist. """
    missing = []
    resolved = []
    for name in names:
        value = getattr(config.paths, name)
        values = value if isinstance(value, tuple) else (value,)
        if not values or any(v is None for v in values):
            missing.append(f"paths.{name} is not set")
            continue
        for v in values:
            if not Path(v).exists():
                missing.append(f"paths.{name} does not exist: {v}")
            resolved.append(Path(v))
    if missing:
        raise ConfigError("; ".join(missing))
    return resolved


def require_roles(config: AppConfig, roles=REQUIRED_ROLES) -> None:
    missing = [role for role in roles if role not in config.backends]
    if missing:
        raise ConfigError(f"no backend configured for: {', '.join(missing)}")


def chat_backend(config: AppConfig, role: str) -> ChatBackend:
    """ The classifier falls back to the reasoning backend. """
    if role == "classifier" and role not in config.backends:
        role = "reasoning"
    require_roles(config, (role,))
    return build_backend(config.backends[role], name=role)


def embedding_backend(config: AppConfig) -> EmbeddingBackend:
    spec = config.embedding
    if spec.kind == "hash":
        return HashEmbeddingBackend(dim=spec.dim or 64, max_batch=spec.max_batch)
    return RemoteEmbeddingBackend(
        spec.base_url,
        model=spec.model,
        dim=spec.dim,
        max_batch=spec.max_batch,
        timeout=spec.timeout,
        retries=spec.retries,
        api_key_env=spec.api_key_env,
    )


def build_pipeline_deps(config: AppConfig, index: Optional[IndexSnapshot] = None) -> PipelineDeps:
    require_roles(config)
    if index is None:
        require_paths(config, "index")
        index = load_index(config.paths.index)
    return PipelineDeps(
        tool=chat_backend(config, "tool"),
        workflow=chat_backend(config, "workflow"),
        reasoning=chat_backend(config, "reasoning"),
        index=index,
        embedder=embedding_backend(config),
    )
