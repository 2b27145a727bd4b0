import pytest
from ontology_parser import (
    OntologyError,
    OntologyParseError,
    OntologyTerm,
    dumps_jsonld,
    load_ontology_file,
    loads_jsonld,
    main,
    parse_obo,
    parse_obo_file,
    parse_onto_json,
    to_jsonld,
)
from utils import ParseReport


def test_single_stanza():
    text = '[Term]\nid: X:1\nname: FASTQ\ndef: "A format..." [EDAM:x]\n'
    assert [t.triple() for t in parse_obo(text)] == [("X:1", "FASTQ", "A format...")]


def test_empty_document():
    assert parse_obo("") == []
    assert parse_obo("format-version: 1.2\nontology: swo\n") == []


def test_software_ontology_sample(fixtures_dir):
    terms = load_ontology_file(str(fixtures_dir / "ontology" / "swo_sample.obo"))
    assert [t.id for t in terms] == ["SWO:0000001", "SWO:0000002", "SWO:0000003"]
    assert terms[1].definition == 'A suite of programs for interacting with "SAM" and BAM alignment files.'
    assert all("[" not in t.definition for t in terms)
    assert {t.ontology_name for t in terms} == {"swo"}


def test_obsolete_terms(fixtures_dir):
    path = str(fixtures_dir / "ontology" / "obsolete_sample.obo")
    assert [t.id for t in load_ontology_file(path)] == ["SO:0000001", "SO:0000110"]
    assert len(load_ontology_file(path, keep_obsolete=True)) == 3


def test_stanza_without_name():
    text = "[Term]\nid: X:1\n\n[Term]\nid: X:2\nname: ok\n"
    report = ParseReport()
    assert [t.id for t in parse_obo(text, report=report)] == ["X:2"]
    assert report.skipped == 1
    with pytest.raises(OntologyParseError) as excinfo:
        parse_obo(text, strict=True)
    assert excinfo.value.line == 1


def test_json_nodes(fixtures_dir):
    report = ParseReport()
    terms = load_ontology_file(str(fixtures_dir / "ontology" / "nodes_sample.json"), report=report)
    assert len(terms) == 8
    assert report.skipped == 2
    by_id = {t.id: t for t in terms}
    assert by_id["SWO:0000007"].definition_missing
    assert by_id["SWO:0000008"].definition.startswith("Aggregate results")


def test_json_that_is_not_json():
    with pytest.raises(OntologyParseError) as excinfo:
        parse_onto_json('{"graphs": [')
    assert excinfo.value.offset is not None


def test_paired_obo_and_json_agree(fixtures_dir):
    obo = load_ontology_file(str(fixtures_dir / "ontology" / "edam_sample.obo"))
    json_terms = load_ontology_file(str(fixtures_dir / "ontology" / "edam_sample.json"))
    assert {(t.id, t.name) for t in obo} == {(t.id, t.name) for t in json_terms}
    assert {t.triple() for t in obo} == {t.triple() for t in json_terms}


def test_unsupported_format(tmp_path):
    path = tmp_path / "terms.owl"
    path.write_text("<rdf/>")
    with pytest.raises(OntologyError):
        load_ontology_file(str(path))


def test_jsonld_shape_and_order():
    terms = [
        OntologyTerm("B:2", "second", "", "obo"),
        OntologyTerm("A:1", "first", "the first", "obo"),
    ]
    doc = to_jsonld(terms)
    assert [node["@id"] for node in doc.graph] == ["A:1", "B:2"]
    assert doc.graph[1]["description"] == ""
    assert set(doc.context) == {"name", "description"}


def test_jsonld_rejects_duplicates():
    with pytest.raises(OntologyError, match="X:1"):
        to_jsonld([OntologyTerm("X:1", "a", "", "obo"), OntologyTerm("X:1", "b", "", "json")])


def test_jsonld_round_trip(fixtures_dir):
    terms = load_ontology_file(str(fixtures_dir / "ontology" / "swo_sample.obo"))
    text = dumps_jsonld(to_jsonld(terms))
    assert [t.triple() for t in loads_jsonld(text)] == [t.triple() for t in terms]
    assert dumps_jsonld(to_jsonld(reversed(terms))) == text


def test_main_writes_one_file_per_input(fixtures_dir, tmp_path):
    inputs = [str(fixtures_dir / "ontology" / name) for name in ("swo_sample.obo", "edam_sample.json")]
    written = main(inputs, str(tmp_path))
    assert sorted(p.name for p in written) == ["edam_sample.jsonld", "swo_sample.jsonld"]
    assert len(loads_jsonld((tmp_path / "edam_sample.jsonld").read_text())) == 3


def test_obo_file_keeps_stanza_order_and_ignores_relations(tmp_path):
    path = tmp_path / "relations.obo"
    path.write_text(
        "format-version: 1.2\nontology: so\n\n"
        "[Term]\nid: SO:0000002\nname: child\nis_a: SO:9999999 ! not in this file\n"
        'def: "Has a parent elsewhere." [SO:ke]\n\n'
        "[Term]\nid: SO:0000001\nname: parent\nalt_id: SO:0000100\n"
    )
    terms = parse_obo_file(path)
    assert [t.triple() for t in terms] == [
        ("SO:0000002", "child", "Has a parent elsewhere."),
        ("SO:0000001", "parent", ""),
    ]
    assert terms[1].definition_missing
    assert {t.ontology_name for t in terms} == {"so"}


def test_duplicate_stanza_ids():
    text = "[Term]\nid: X:1\nname: a\n\n[Term]\nid: X:1\nname: b\n"
    report = ParseReport()
    assert [t.name for t in parse_obo(text, report=report)] == ["a"]
    assert report.skipped == 1
    with pytest.raises(OntologyParseError) as excinfo:
        parse_obo(text, strict=True)
    assert excinfo.value.line == 5


@pytest.mark.parametrize("text", ["[]", '["graphs"]', "42", '"graphs"'])
def test_json_document_that_is_not_an_object(text):
    with pytest.raises(OntologyParseError, match="JSON object"):
        parse_onto_json(text)
