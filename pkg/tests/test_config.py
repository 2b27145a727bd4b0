from pathlib import Path
import pytest
import yaml
from config import (
    ConfigError,
    build_pipeline_deps,
    chat_backend,
    embedding_backend,
    load_config,
    parse_config,
    require_paths,
)
from gateway import GenConfig, RemoteChatBackend, ScriptedChatBackend
from vector_index import HashEmbeddingBackend, persist_index

ROOT = Path(__file__).resolve().parent.parent

SCRIPTED = {
    "backends": {
        "tool": {"kind": "scripted-mock", "script": {"default": "Use FastQC."}},
        "workflow": {"kind": "scripted-mock", "script": ["Use nf-core/fastqc."]},
        "reasoning": {"kind": "remote", "base_url": "http://localhost:8001", "model": "phi3", "timeout_ms": 2500},
    }
}


def test_defaults():
    config = load_config()
    assert config.pipeline.threshold == 4
    assert config.pipeline.max_rounds == 3
    assert config.pipeline.retrieval_k == 1
    assert config.gen == GenConfig()
    assert config.backends == {}
    assert isinstance(embedding_backend(config), HashEmbeddingBackend)


def test_backend_sections():
    config = parse_config(SCRIPTED)
    assert config.backends["workflow"].queue == ("Use nf-core/fastqc.",)
    assert config.backends["reasoning"].timeout == 2.5
    assert isinstance(chat_backend(config, "tool"), ScriptedChatBackend)
    assert isinstance(chat_backend(config, "reasoning"), RemoteChatBackend)
    assert chat_backend(config, "classifier").name == "reasoning"


@pytest.mark.parametrize(
    "data",
    [
        {"pipeline": {"threshold": 9}},
        {"pipeline": {"max_rounds": 0}},
        {"backends": {"planner": {"kind": "scripted-mock", "script": ["x"]}}},
        {"backends": {"tool": {"kind": "remote"}}},
        {"backends": {"embedding": {"kind": "remote"}}},
        {"index": {"max_chars": 100, "overlap_chars": 100}},
        {"ingest": {"help_provider": "ftp"}},
        {"paths": {"prompts": "/nonexistent/prompts"}},
        ["not", "a", "mapping"],
    ],
)
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        parse_config(data)


def test_load_from_file(tmp_path):
    path = tmp_path / "bioflow.yml"
    path.write_text(yaml.safe_dump({**SCRIPTED, "pipeline": {"threshold": 5}}))
    config = load_config(str(path))
    assert config.pipeline.threshold == 5
    assert config.source == str(path)


def test_missing_and_broken_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "absent.yml"))
    broken = tmp_path / "broken.yml"
    broken.write_text("backends: [unclosed\n")
    with pytest.raises(ConfigError, match="YAML"):
        load_config(str(broken))


def test_shipped_config_parses():
    config = load_config(str(ROOT / "bioflow_config.yml"))
    assert set(config.backends) >= {"tool", "workflow", "reasoning"}


def test_require_paths(tmp_path):
    config = parse_config({"paths": {"index": str(tmp_path / "missing.json")}})
    with pytest.raises(ConfigError, match="paths.index"):
        require_paths(config, "index")
    with pytest.raises(ConfigError, match="paths.nfcore is not set"):
        require_paths(config, "nfcore")


def test_pipeline_deps_need_roles_and_index(tmp_path, nfcore_index):
    with pytest.raises(ConfigError, match="no backend configured"):
        build_pipeline_deps(parse_config({}))
    index_path = tmp_path / "index.json"
    persist_index(nfcore_index, str(index_path))
    config = parse_config({**SCRIPTED, "paths": {"index": str(index_path)}})
    deps = build_pipeline_deps(config)
    assert deps.index == nfcore_index
    assert deps.embedder.dim == nfcore_index.dim
