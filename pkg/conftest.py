from pathlib import Path
from typing import List, Sequence
import httpx
import pytest
from gateway import ScriptedChatBackend
from nfcore_parser import ingest_nfcore
from orchestrator import PipelineConfig, PipelineDeps
from vector_index import HashEmbeddingBackend, build_index

FIXTURES = Path(__file__).resolve().parent / "fixtures"


def reasoning_script(ratings: Sequence[int]) -> List[str]:
    """ Replies for the reasoning backend: a synthesis then a rating, per round. """
    script = []
    for round_number, rating in enumerate(ratings, start=1):
        script.extend([f"Synthesized answer for round {round_number}.", str(rating)])
    return script


def constant(text: str, name: str = "scripted") -> ScriptedChatBackend:
    return ScriptedChatBackend(responder=lambda _messages: text, name=name)


def make_deps(ratings: Sequence[int], index=None, embedder=None) -> PipelineDeps:
    return PipelineDeps(
        tool=constant("Use FastQC on every FASTQ file.", "tool"),
        workflow=constant("Run the nf-core fastqc module.", "workflow"),
        reasoning=ScriptedChatBackend(queue=reasoning_script(ratings), name="reasoning"),
        index=index,
        embedder=embedder,
    )


def trs_transport(tools: Sequence[dict], page_size: int = 100, loop_at=None) -> httpx.MockTransport:
    """ A TRS v2 listing served in pages of page_size with a `next_page` header.
    `loop_at` makes that page point back at the first one. """

    def handler(request: httpx.Request) -> httpx.Response:
        assert request.url.path.endswith("/tools")
        offset = int(request.url.params.get("offset", 0))
        limit = int(request.url.params.get("limit", page_size))
        page = list(tools[offset: offset + limit])
        headers = {}
        if loop_at is not None and offset == loop_at:
            headers["next_page"] = f"{request.url.path}?limit={limit}&offset=0"
        elif offset + limit < len(tools):
            headers["next_page"] = f"{request.url.path}?limit={limit}&offset={offset + limit}"
        return httpx.Response(200, json=page, headers=headers)

    return httpx.MockTransport(handler)


def registry_tools(count: int) -> List[dict]:
    return [
        {
            "id": f"tool{i:03d}",
            "name": f"tool{i:03d}",
            "downloads": (i * 7919) % 1000,
            "versions": [{"id": f"tool{i:03d}:1.{i}", "name": f"1.{i}"}],
        }
        for i in range(count)
    ]


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def embedder() -> HashEmbeddingBackend:
    return HashEmbeddingBackend()


@pytest.fixture(scope="session")
def nfcore_index(embedder):
    return build_index(ingest_nfcore(str(FIXTURES / "nfcore")), embedder)


@pytest.fixture
def pipeline_config() -> PipelineConfig:
    return PipelineConfig()
