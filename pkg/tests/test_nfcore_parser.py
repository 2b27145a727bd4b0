import pytest
from nfcore_parser import ingest_nfcore, ontology_documents
from ontology_parser import load_ontology_file
from utils import ParseReport


def test_fixture_corpus(fixtures_dir):
    docs = ingest_nfcore(str(fixtures_dir / "nfcore"))
    assert [d.id for d in docs] == [
        "modules/fastqc/meta.yml",
        "modules/star/align/meta.yml",
        "pipelines/rnaseq/usage.md",
    ]
    assert [d.title for d in docs] == ["fastqc", "star_align", "nf-core/rnaseq: Usage"]
    assert all(d.corpus == "nfcore" and d.text.strip() for d in docs)


def test_empty_and_missing_directories(tmp_path):
    assert ingest_nfcore(str(tmp_path)) == []
    with pytest.raises(FileNotFoundError):
        ingest_nfcore(str(tmp_path / "absent"))


def test_unreadable_files_are_counted(tmp_path):
    (tmp_path / "good.md").write_text("# Title\ntext")
    (tmp_path / "bad.md").write_bytes(b"\xff\xfe\xfa not utf-8")
    report = ParseReport()
    docs = ingest_nfcore(str(tmp_path), report)
    assert [d.id for d in docs] == ["good.md"]
    assert report.skipped == 1


def test_ontology_terms_as_documents(fixtures_dir):
    terms = load_ontology_file(str(fixtures_dir / "ontology" / "edam_sample.obo"))
    docs = ontology_documents(terms)
    assert [d.id for d in docs] == ["format:1930", "operation:0292", "topic:3170"]
    assert docs[0].text.startswith("FASTQ: FASTQ short read format")
    assert {d.corpus for d in docs} == {"ontology"}
    assert docs[0].origin == "edam"
