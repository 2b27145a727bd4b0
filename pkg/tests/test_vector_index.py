import json
import random
import httpx
import numpy as np
import pytest
from nfcore_parser import SourceDoc
from vector_index import (
    ChunkPolicy,
    DimensionMismatchError,
    DocChunk,
    DuplicateChunkError,
    EmbeddingBackend,
    HashEmbeddingBackend,
    IndexIntegrityError,
    RemoteEmbeddingBackend,
    VectorIndexError,
    add_chunks,
    build_index,
    chunk_document,
    embed_batch,
    empty_index,
    index_stats,
    load_index,
    main,
    persist_index,
    search,
)

VOCABULARY = (
    "fastqc samtools bwa star salmon kallisto trimmomatic cutadapt multiqc picard gatk bcftools "
    "align sort index trim quality reads genome transcript variant call merge filter report count "
    "fastq bam sam vcf bed gtf paired single adapter coverage depth duplicate sample lane read group"
).split()


class TableEmbedding(EmbeddingBackend):
    """ Fixed vectors per text. """

    def __init__(self, table, dim):
        self.table = table
        self.dim = dim
        self.max_batch = 16
        self.calls = 0

    def embed(self, texts):
        self.calls += 1
        return np.array([self.table[text] for text in texts], dtype=np.float64)


class ShortVectors(HashEmbeddingBackend):
    """ Claims 64 dimensions but returns 32. """

    def embed(self, texts):
        return super().embed(texts)[:, :32]


def doc(text, doc_id="doc"):
    return SourceDoc(id=doc_id, title="title", text=text, origin="test")


def chunk(chunk_id, text=None):
    return DocChunk(chunk_id=chunk_id, source_id=chunk_id.split("#")[0], text=text or chunk_id, meta={"corpus": "test"})


def test_short_document_is_one_chunk():
    chunks = chunk_document(doc("0123456789"), ChunkPolicy(100, 20))
    assert [c.text for c in chunks] == ["0123456789"]
    assert chunks[0].chunk_id == "doc#0"
    assert chunks[0].meta == {"corpus": "nfcore", "title": "title", "origin": "test"}


def test_empty_document_has_no_chunks():
    assert chunk_document(doc("")) == []


@pytest.mark.parametrize("policy", [ChunkPolicy(100, 100), ChunkPolicy(10, 20), ChunkPolicy(10, -1)])
def test_invalid_policies(policy):
    with pytest.raises(ValueError):
        chunk_document(doc("text"), policy)


def test_chunks_cover_the_text_with_exact_overlap():
    rng = random.Random(3)
    text = " ".join(rng.choice(VOCABULARY) for _ in range(50))[:250]
    text = text.ljust(250, "x")
    policy = ChunkPolicy(100, 20)
    chunks = [c.text for c in chunk_document(doc(text), policy)]
    assert len(chunks) >= 3
    assert all(len(c) <= 100 for c in chunks)
    for left, right in zip(chunks, chunks[1:]):
        assert left[-20:] == right[:20]
    assert chunks[0] + "".join(c[20:] for c in chunks[1:]) == text


def test_paragraph_breaks_are_preferred():
    paragraphs = ["a" * 58 + ".", "b" * 58 + ".", "c" * 58 + "."]
    text = "\n\n".join(paragraphs)
    chunks = [c.text for c in chunk_document(doc(text), ChunkPolicy(100, 0))]
    assert chunks == [paragraphs[0] + "\n\n", paragraphs[1] + "\n\n", paragraphs[2]]

    with_overlap = [c.text for c in chunk_document(doc(text), ChunkPolicy(100, 20))]
    assert len(with_overlap) == 3
    assert with_overlap[0].endswith("\n\n") and with_overlap[1].endswith("\n\n")


def test_unbroken_text_is_hard_cut():
    chunks = [c.text for c in chunk_document(doc("x" * 250), ChunkPolicy(100, 10))]
    assert [len(c) for c in chunks] == [100, 100, 70]


def test_hash_embeddings_are_deterministic_unit_vectors(embedder):
    vectors = embed_batch(["FastQC quality report", "FastQC quality report", "bwa mem"], embedder)
    assert vectors.shape == (3, 64)
    assert np.allclose(np.linalg.norm(vectors, axis=1), 1.0)
    assert np.array_equal(vectors[0], vectors[1])


def test_large_batches_are_split():
    backend = HashEmbeddingBackend(max_batch=1000)
    vectors = embed_batch([f"text {i}" for i in range(2001)], backend)
    assert vectors.shape == (2001, 64)
    assert backend.calls == 3


def test_empty_batch_makes_no_call():
    backend = HashEmbeddingBackend()
    assert embed_batch([], backend).shape == (0, 64)
    assert backend.calls == 0


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        embed_batch(["a"], ShortVectors())
    with pytest.raises(DimensionMismatchError):
        add_chunks(empty_index(32), [chunk("a#0")], HashEmbeddingBackend())


def test_add_chunks_and_duplicates(embedder):
    index = add_chunks(empty_index(64), [chunk(f"a#{i}") for i in range(3)], embedder)
    index = add_chunks(index, [chunk(f"b#{i}") for i in range(2)], embedder)
    assert index.size == 5
    with pytest.raises(DuplicateChunkError):
        add_chunks(index, [chunk("a#1")], embedder)
    with pytest.raises(DuplicateChunkError):
        add_chunks(index, [chunk("c#0"), chunk("c#0")], embedder)
    assert index.size == 5


def test_add_chunks_leaves_the_old_snapshot_alone(embedder):
    first = add_chunks(empty_index(64), [chunk("a#0")], embedder)
    second = add_chunks(first, [chunk("a#1")], embedder)
    assert first.size == 1 and second.size == 2


def test_hand_computed_ranking():
    table = {"e1": [1.0, 0.0], "e2": [0.0, 1.0], "e3": [0.7071, 0.7071], "q": [1.0, 0.0]}
    backend = TableEmbedding(table, dim=2)
    index = add_chunks(empty_index(2), [chunk("e1"), chunk("e2"), chunk("e3")], backend)
    hits = search(index, "q", 2, backend)
    assert [h.chunk_id for h in hits] == ["e1", "e3"]
    assert hits[0].score == pytest.approx(1.0)
    assert hits[1].score == pytest.approx(0.70710678, abs=1e-4)


def test_ties_are_broken_by_chunk_id():
    table = {"b": [1.0, 0.0], "a": [2.0, 0.0], "c": [0.0, 1.0], "q": [1.0, 0.0]}
    backend = TableEmbedding(table, dim=2)
    index = add_chunks(empty_index(2), [chunk("b"), chunk("c"), chunk("a")], backend)
    assert [h.chunk_id for h in search(index, "q", 3, backend)] == ["a", "b", "c"]


def test_search_matches_brute_force(embedder):
    rng = random.Random(11)
    chunks = [chunk(f"c{i:03d}#0", " ".join(rng.choices(VOCABULARY, k=6))) for i in range(200)]
    index = add_chunks(empty_index(64), chunks, embedder)
    for _ in range(20):
        query = " ".join(rng.choices(VOCABULARY, k=4))
        k = rng.randint(1, 15)
        query_vector = embed_batch([query], embedder)[0]
        scored = [(round(float(np.dot(index.matrix[i], query_vector)), 12), c.chunk_id) for i, c in enumerate(index.chunks)]
        expected = [chunk_id for _, chunk_id in sorted(scored, key=lambda item: (-item[0], item[1]))[:k]]
        hits = search(index, query, k, embedder)
        assert [h.chunk_id for h in hits] == expected
        assert all(-1.0 <= h.score <= 1.0 for h in hits)


def test_every_chunk_is_reachable(embedder):
    chunks = [chunk(f"c{i:03d}#0", f"{VOCABULARY[i % 40]} {VOCABULARY[(i * 7) % 40]} step {i}") for i in range(100)]
    index = add_chunks(empty_index(64), chunks, embedder)
    for c in chunks:
        hits = search(index, c.text, index.size, embedder)
        best = hits[0].score
        assert best == pytest.approx(1.0)
        assert c.chunk_id in {h.chunk_id for h in hits if h.score >= best - 1e-9}


def test_search_edge_cases(embedder):
    assert search(empty_index(64), "anything", 5, embedder) == []
    index = add_chunks(empty_index(64), [chunk("a#0")], embedder)
    assert len(search(index, "anything", 5, embedder)) == 1
    with pytest.raises(ValueError):
        search(index, "anything", 0, embedder)


def test_persist_round_trip(embedder, tmp_path):
    chunks = [chunk(f"c{i:02d}#0", " ".join(random.Random(i).choices(VOCABULARY, k=5))) for i in range(50)]
    index = add_chunks(empty_index(64), chunks, embedder)
    path = tmp_path / "index.json"
    persist_index(index, str(path))
    assert load_index(str(path)) == index


def test_empty_index_round_trip(tmp_path):
    path = tmp_path / "index.json"
    persist_index(empty_index(16), str(path))
    reloaded = load_index(str(path))
    assert reloaded.size == 0 and reloaded.dim == 16


def test_tampered_files_are_rejected(embedder, tmp_path):
    path = tmp_path / "index.json"
    persist_index(add_chunks(empty_index(64), [chunk("a#0"), chunk("b#0")], embedder), str(path))
    original = path.read_text()

    marker = '"checksum":"'
    at = original.index(marker) + len(marker)
    flipped = "0" if original[at] != "0" else "1"
    path.write_text(original[:at] + flipped + original[at + 1:])
    with pytest.raises(IndexIntegrityError):
        load_index(str(path))

    marker = '"vector":['
    at = original.index(marker) + len(marker)
    tampered = original[:at] + original[at + 1:] if original[at] == "-" else original[:at] + "-" + original[at:]
    path.write_text(tampered)
    with pytest.raises(IndexIntegrityError):
        load_index(str(path))

    path.write_text(original[: len(original) // 2])
    with pytest.raises(IndexIntegrityError):
        load_index(str(path))


def test_unknown_format_version(embedder, tmp_path):
    path = tmp_path / "index.json"
    persist_index(empty_index(8), str(path))
    document = json.loads(path.read_text())
    document["header"]["version"] = 99
    path.write_text(json.dumps(document))
    with pytest.raises(VectorIndexError, match="version"):
        load_index(str(path))


def test_index_stats(nfcore_index):
    stats = index_stats(nfcore_index)
    assert list(stats["corpus"]) == ["nfcore"]
    assert int(stats["sources"].iloc[0]) == 3
    assert int(stats["chunks"].iloc[0]) >= 3


def test_main_indexes_docs_and_terms(fixtures_dir, tmp_path, embedder):
    path = tmp_path / "index.json"
    index = main(str(fixtures_dir / "nfcore"), [str(fixtures_dir / "ontology" / "edam_sample.obo")], str(path), embedder)
    assert set(index_stats(index)["corpus"]) == {"nfcore", "ontology"}
    assert load_index(str(path)) == index


def test_main_without_documents(tmp_path, embedder):
    with pytest.raises(VectorIndexError, match="no documents"):
        main(str(tmp_path), [], str(tmp_path / "index.json"), embedder)


def test_remote_embeddings():
    requests = []

    def handler(request):
        body = json.loads(request.content)
        requests.append(body)
        data = [{"embedding": [float(len(text)), 1.0, 0.0]} for text in body["input"]]
        return httpx.Response(200, json={"data": data})

    backend = RemoteEmbeddingBackend("http://embed.test", max_batch=2, transport=httpx.MockTransport(handler))
    vectors = embed_batch(["a", "bb", "ccc"], backend)
    assert vectors.shape == (3, 3)
    assert backend.dim == 3
    assert [len(r["input"]) for r in requests] == [2, 1]
    assert requests[0]["model"] == "text-embedding-ada-002"


@pytest.mark.parametrize("payload", [{"error": "x"}, {"data": "x"}, {"data": [{"vector": [1.0]}]}, {"data": []}])
def test_remote_embeddings_with_unexpected_payload(payload):
    transport = httpx.MockTransport(lambda request: httpx.Response(200, json=payload))
    backend = RemoteEmbeddingBackend("http://embed.test", dim=3, transport=transport)
    with pytest.raises(VectorIndexError, match="unexpected embeddings payload"):
        backend.embed(["fastqc"])


def test_remote_embeddings_with_non_json_body():
    transport = httpx.MockTransport(lambda request: httpx.Response(200, text="<html>gateway</html>"))
    backend = RemoteEmbeddingBackend("http://embed.test", dim=3, transport=transport)
    with pytest.raises(VectorIndexError):
        backend.embed(["fastqc"])
