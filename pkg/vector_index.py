""" Chunking, embeddings and exact cosine top-k retrieval over an in-process index.

Vectors are L2-normalized on receipt, so cosine similarity is a dot product against
the (n, dim) matrix of the snapshot. Snapshots are immutable: `add_chunks` returns a
new snapshot, so readers can keep searching the old one while a writer builds.

Index file format (canonical JSON, one file):

{"header": {"checksum": "<sha256 of the canonical entries>", "count": 2, "dim": 64, "version": 1},
 "entries": [{"chunk": {"chunk_id": "...", "meta": {...}, "source_id": "...", "text": "..."},
              "vector": [0.01, ...]}, ...]}

Floats are written with Python's shortest round-trip repr, so vectors reload bit-exact.
"""
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple
import hashlib
import json
import os
import re
import httpx
import numpy as np
import pandas as pd
from loguru import logger
from nfcore_parser import SourceDoc, ingest_nfcore, ontology_documents
from ontology_parser import load_ontology_file
from utils import atomic_write_text, call_with_retries, canonical_dumps

INDEX_FORMAT_VERSION = 1
DEFAULT_MAX_CHARS = 1200
DEFAULT_OVERLAP_CHARS = 200
HASH_EMBEDDING_DIM = 64
DEFAULT_EMBEDDING_MODEL = "text-embedding-ada-002"

SENTENCE_END = re.compile(r"[.!?]\s")
WHITESPACE = re.compile(r"\s")


class VectorIndexError(Exception):
    pass


class DuplicateChunkError(VectorIndexError):
    pass


class DimensionMismatchError(VectorIndexError):
    pass


class IndexIntegrityError(VectorIndexError):
    pass


class EmbeddingUnavailableError(VectorIndexError):
    pass


class ChunkPolicy(NamedTuple):
    max_chars: int = DEFAULT_MAX_CHARS
    overlap_chars: int = DEFAULT_OVERLAP_CHARS


class DocChunk(NamedTuple):
    chunk_id: str
    source_id: str
    text: str
    meta: Dict[str, str]

    def to_dict(self) -> dict:
        return {"chunk_id": self.chunk_id, "source_id": self.source_id, "text": self.text, "meta": dict(self.meta)}


class SearchHit(NamedTuple):
    chunk_id: str
    score: float
    chunk: DocChunk

    def to_dict(self) -> dict:
        return {"chunk_id": self.chunk_id, "score": self.score, "chunk": self.chunk.to_dict()}

    @classmethod
    def from_dict(cls, row: dict) -> "SearchHit":
        return cls(chunk_id=row["chunk_id"], score=float(row["score"]), chunk=DocChunk(**row["chunk"]))


@dataclass(frozen=True)
class IndexSnapshot:
    dim: int
    chunks: tuple = ()
    # (count, dim) float64, rows L2-normalized
    matrix: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    version: int = INDEX_FORMAT_VERSION

    def __post_init__(self):
        if self.matrix.shape[0] == 0 and self.matrix.shape[1] != self.dim:
            object.__setattr__(self, "matrix", np.zeros((0, self.dim)))

    @property
    def size(self) -> int:
        return len(self.chunks)

    @property
    def entries(self) -> List[Tuple[str, np.ndarray, DocChunk]]:
        return [(chunk.chunk_id, self.matrix[i], chunk) for i, chunk in enumerate(self.chunks)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, IndexSnapshot):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.version == other.version
            and self.chunks == other.chunks
            and self.matrix.shape == other.matrix.shape
            and np.array_equal(self.matrix, other.matrix)
        )

    __hash__ = None


def empty_index(dim: int) -> IndexSnapshot:
    if dim < 1:
        raise ValueError("dim must be positive")
    return IndexSnapshot(dim=dim, chunks=(), matrix=np.zeros((0, dim)))


def _split_point(text: str, start: int, policy: ChunkPolicy) -> int:
    """ End offset of the chunk starting at `start`: the last paragraph break, else sentence
    end, else whitespace inside the window, else a hard cut at max_chars. The end always lies
    past start + overlap so the next chunk makes progress. """
    limit = start + policy.max_chars
    if len(text) <= limit:
        return len(text)

    window = text[start:limit]
    minimum = policy.overlap_chars + 1

    paragraph = window.rfind("\n\n")
    if paragraph >= 0 and paragraph + 2 >= minimum:
        return start + paragraph + 2

    sentence_ends = [m.end() for m in SENTENCE_END.finditer(window) if m.end() >= minimum]
    if sentence_ends:
        return start + sentence_ends[-1]

    spaces = [m.end() for m in WHITESPACE.finditer(window) if m.end() >= minimum]
    if spaces:
        return start + spaces[-1]

    return limit


def chunk_document(doc: SourceDoc, policy: ChunkPolicy = ChunkPolicy()) -> List[DocChunk]:
    """ Consecutive chunks share exactly overlap_chars characters, so the first chunk plus
    every later chunk minus its first overlap_chars characters rebuilds the text. """
    if not policy.max_chars > policy.overlap_chars >= 0:
        raise ValueError("chunk policy needs max_chars > overlap_chars >= 0")
    text = doc.text
    if not text:
        return []

    meta = {"corpus": doc.corpus, "title": doc.title, "origin": doc.origin}
    chunks = []
    start = 0
    while True:
        end = _split_point(text, start, policy)
        chunks.append(
            DocChunk(chunk_id=f"{doc.id}#{len(chunks)}", source_id=doc.id, text=text[start:end], meta=dict(meta))
        )
        if end >= len(text):
            break
        start = end - policy.overlap_chars
    return chunks


def normalize_rows(vectors: np.ndarray) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise VectorIndexError("embeddings must be a 2-d array")
    if not np.all(np.isfinite(vectors)):
        raise VectorIndexError("embedding contains non-finite values")
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise VectorIndexError("embedding is all zeros")
    return vectors / norms


class EmbeddingBackend:
    dim: int
    max_batch: int = 1000
    calls: int = 0

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        raise NotImplementedError


class HashEmbeddingBackend(EmbeddingBackend):
    """ Deterministic bag-of-words: each lowercase token hashes to a signed slot of a dim-64
    vector. Same text, same vector; no network. """

    def __init__(self, dim: int = HASH_EMBEDDING_DIM, max_batch: int = 1000):
        self.dim = dim
        self.max_batch = max_batch
        self.calls = 0

    def _embed_one(self, text: str) -> np.ndarray:
        vector = np.zeros(self.dim)
        tokens = re.findall(r"[a-z0-9]+", text.lower()) or [text]
        for token in tokens:
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            slot = int.from_bytes(digest[:4], "big") % self.dim
            vector[slot] += 1.0 if digest[4] % 2 == 0 else -1.0
        if not np.any(vector):
            # tokens cancelled out; fall back to the slot of the whole text
            digest = hashlib.sha256(text.encode("utf-8")).digest()
            vector[int.from_bytes(digest[:4], "big") % self.dim] = 1.0
        return vector

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        self.calls += 1
        return np.vstack([self._embed_one(text) for text in texts]) if texts else np.zeros((0, self.dim))


class RemoteEmbeddingBackend(EmbeddingBackend):
    """ OpenAI-compatible POST /v1/embeddings. The dimension is read from the first
    response unless configured. """

    def __init__(
        self,
        base_url: str,
        model: str = DEFAULT_EMBEDDING_MODEL,
        dim: Optional[int] = None,
        max_batch: int = 1000,
        timeout: float = 60.0,
        retries: int = 2,
        backoff_seconds: float = 0.5,
        api_key_env: str = "BIOFLOW_API_KEY",
        transport: Optional[httpx.BaseTransport] = None,
    ):
        self.model = model
        self._dim = dim
        self.max_batch = max_batch
        self.retries = retries
        self.backoff_seconds = backoff_seconds
        self.calls = 0
        headers = {}
        if os.environ.get(api_key_env):
            headers["Authorization"] = f"Bearer {os.environ[api_key_env]}"
        self._client = httpx.Client(base_url=base_url.rstrip("/"), timeout=timeout, headers=headers, transport=transport)

    @property
    def dim(self) -> int:
        if self._dim is None:
            self._dim = int(self.embed(["dimension check"]).shape[1])
        return self._dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        self.calls += 1
        try:
            response = call_with_retries(
                lambda: self._client.post("/v1/embeddings", json={"model": self.model, "input": list(texts)}),
                retries=self.retries,
                backoff_seconds=self.backoff_seconds,
                retry_on=(httpx.TransportError,),
                label="EMBEDDING REQUEST",
            )
        except httpx.TransportError as exc:
            raise EmbeddingUnavailableError(str(exc)) from exc
        if not response.is_success:
            raise EmbeddingUnavailableError(f"HTTP {response.status_code}: {response.text[:200]}")
        try:
            vectors = np.array([row["embedding"] for row in response.json()["data"]], dtype=np.float64)
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise VectorIndexError(f"unexpected embeddings payload {response.text[:200]!r}") from exc
        if vectors.ndim != 2:
            raise VectorIndexError(f"unexpected embeddings payload {response.text[:200]!r}")
        if self._dim is None and vectors.size:
            self._dim = vectors.shape[1]
        return vectors


def embed_batch(texts: Sequence[str], backend: EmbeddingBackend) -> np.ndarray:
    """ One unit-norm row per text, in order. Batches larger than the backend limit are split. """
    texts = list(texts)
    if not texts:
        return np.zeros((0, backend.dim))

    batches = []
    for offset in range(0, len(texts), backend.max_batch):
        batch = texts[offset: offset + backend.max_batch]
        vectors = np.asarray(backend.embed(batch), dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(batch):
            raise VectorIndexError(f"backend returned {vectors.shape[0] if vectors.ndim else 0} vectors for {len(batch)} texts")
        if vectors.shape[1] != backend.dim:
            raise DimensionMismatchError(f"backend declared dim {backend.dim} but returned {vectors.shape[1]}")
        batches.append(normalize_rows(vectors))
    return np.vstack(batches)


def add_chunks(index: IndexSnapshot, chunks: Sequence[DocChunk], backend: EmbeddingBackend) -> IndexSnapshot:
    """ Returns a new snapshot holding the old entries plus chunks. Validation happens before
    anything is embedded, so a failed add leaves the index untouched. """
    chunks = list(chunks)
    if backend.dim != index.dim:
        raise DimensionMismatchError(f"index dim {index.dim} != backend dim {backend.dim}")

    existing = {chunk.chunk_id for chunk in index.chunks}
    new_ids = [chunk.chunk_id for chunk in chunks]
    duplicates = sorted({cid for cid in new_ids if cid in existing} | {cid for cid in new_ids if new_ids.count(cid) > 1})
    if duplicates:
        raise DuplicateChunkError(f"chunk ids already present: {', '.join(duplicates[:10])}")
    if not chunks:
        return index

    vectors = embed_batch([chunk.text for chunk in chunks], backend)
    return IndexSnapshot(
        dim=index.dim,
        chunks=index.chunks + tuple(chunks),
        matrix=np.vstack([index.matrix, vectors]),
        version=index.version,
    )


def search(index: IndexSnapshot, query: str, k: int, backend: EmbeddingBackend) -> List[SearchHit]:
    """ Exact top-k by cosine similarity, sorted by score descending then chunk_id. """
    if k < 1:
        raise ValueError("k must be >= 1")
    if index.size == 0:
        logger.warning("SEARCH ON AN EMPTY INDEX")
        return []

    query_vector = embed_batch([query], backend)[0]
    scores = np.clip(index.matrix @ query_vector, -1.0, 1.0)
    chunk_ids = np.array([chunk.chunk_id for chunk in index.chunks])
    # lexsort sorts by the last key first; rounding lets equal vectors tie exactly
    order = np.lexsort((chunk_ids, -np.round(scores, 12)))[:k]
    return [SearchHit(chunk_id=index.chunks[i].chunk_id, score=float(scores[i]), chunk=index.chunks[i]) for i in order]


def build_index(docs: Iterable[SourceDoc], backend: EmbeddingBackend, policy: ChunkPolicy = ChunkPolicy()) -> IndexSnapshot:
    chunks = [chunk for doc in docs for chunk in chunk_document(doc, policy)]
    logger.info("EMBEDDING {} CHUNKS", len(chunks))
    return add_chunks(empty_index(backend.dim), chunks, backend)


def _entries_checksum(entries: list) -> str:
    return hashlib.sha256(canonical_dumps(entries).encode("utf-8")).hexdigest()


def persist_index(index: IndexSnapshot, filepath: str) -> None:
    entries = [
        {"chunk": chunk.to_dict(), "vector": [float(v) for v in index.matrix[i]]}
        for i, chunk in enumerate(index.chunks)
    ]
    header = {
        "version": index.version,
        "dim": index.dim,
        "count": len(entries),
        "checksum": _entries_checksum(entries),
    }
    logger.info("WRITING {}", filepath)
    atomic_write_text(filepath, canonical_dumps({"header": header, "entries": entries}) + "\n")


def load_index(filepath: str) -> IndexSnapshot:
    logger.info("READING {}", filepath)
    with open(filepath, "r", encoding="utf-8") as read_handle:
        try:
            document = json.load(read_handle)
            header = document["header"]
            entries = document["entries"]
        except (ValueError, KeyError, TypeError) as exc:
            raise IndexIntegrityError(f"unreadable or truncated index file {filepath}: {exc}") from exc

    if header.get("version") != INDEX_FORMAT_VERSION:
        raise VectorIndexError(f"unsupported index format version {header.get('version')}")
    if header.get("checksum") != _entries_checksum(entries) or header.get("count") != len(entries):
        raise IndexIntegrityError(f"checksum mismatch in {filepath}")

    dim = int(header["dim"])
    chunks = tuple(DocChunk(**entry["chunk"]) for entry in entries)
    matrix = np.array([entry["vector"] for entry in entries], dtype=np.float64).reshape(len(entries), dim)
    return IndexSnapshot(dim=dim, chunks=chunks, matrix=matrix, version=header["version"])


def index_stats(index: IndexSnapshot) -> pd.DataFrame:
    """ Chunk counts per corpus:

    +----------+----------+-----------+
    | corpus   |   chunks |   sources |
    +==========+==========+===========+
    | nfcore   |      120 |        31 |
    | ontology |       85 |        85 |
    +----------+----------+-----------+
    """
    if index.size == 0:
        return pd.DataFrame(columns=["corpus", "chunks", "sources"])
    frame = pd.DataFrame(
        [{"corpus": chunk.meta.get("corpus", ""), "source_id": chunk.source_id} for chunk in index.chunks]
    )
    return (
        frame.groupby("corpus")
        .agg(chunks=("source_id", "size"), sources=("source_id", "nunique"))
        .reset_index()
    )


def main(
    nfcore_directory: Optional[str],
    ontology_filepaths: Iterable[str],
    index_filepath: str,
    backend: EmbeddingBackend,
    policy: ChunkPolicy = ChunkPolicy(),
) -> IndexSnapshot:
    """ Builds the workflow agent's index from nf-core docs plus ontology terms. """
    docs = ingest_nfcore(nfcore_directory) if nfcore_directory else []
    terms = [term for filepath in ontology_filepaths for term in load_ontology_file(filepath)]
    docs.extend(ontology_documents(terms))
    if not docs:
        raise VectorIndexError("no documents to index")
    index = build_index(docs, backend, policy)
    persist_index(index, index_filepath)
    return index
