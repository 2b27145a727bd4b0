""" Parses OBO and OBO-Graphs JSON ontology files (EDAM, Software Ontology, Sequence Ontology)
into normalized (id, name, definition) terms and converts them to a JSON-LD knowledge base.

The JSON-LD output has this form (sorted by @id, canonical serialization):

{
  "@context": {"description": "http://schema.org/description", "name": "http://schema.org/name"},
  "@graph": [
    {"@id": "SWO:0000001", "description": "A software tool ...", "name": "FastQC"},
    ...
  ]
}
"""
from collections import Counter
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Union
import json
import re
import tempfile
from goatools.obo_parser import OBOReader
from loguru import logger
from utils import ParseReport, atomic_write_text, canonical_dumps

JSONLD_CONTEXT = {
    "name": "http://schema.org/name",
    "description": "http://schema.org/description",
}

OBO_PURL = "http://purl.obolibrary.org/obo/"
EDAM_BASE = "http://edamontology.org/"

# a quoted OBO value, backslash escapes allowed, followed by anything (usually an xref list):
QUOTED_VALUE = re.compile(r'^"((?:[^"\\]|\\.)*)"')
OBO_ESCAPES = re.compile(r"\\(.)")
OBO_ESCAPE_MAP = {"n": "\n", "t": "\t", "W": " "}


class OntologyParseError(Exception):
    def __init__(self, message: str, line: Optional[int] = None, offset: Optional[int] = None):
        location = ""
        if line is not None:
            location = f" (line {line})"
        elif offset is not None:
            location = f" (offset {offset})"
        super().__init__(f"{message}{location}")
        self.line = line
        self.offset = offset


class OntologyError(Exception):
    """ Raised by conversions, for instance on duplicate ids. """


class OntologyTerm(NamedTuple):
    id: str
    name: str
    definition: str
    source: str  # obo | json
    ontology_name: str = ""
    definition_missing: bool = False

    def triple(self) -> tuple:
        return self.id, self.name, self.definition


class JsonLdDoc(NamedTuple):
    context: dict
    graph: list


def unescape_obo(value: str) -> str:
    return OBO_ESCAPES.sub(lambda m: OBO_ESCAPE_MAP.get(m.group(1), m.group(1)), value)


def parse_def_value(raw_value: str) -> str:
    """ `"A format..." [EDAM:x]` -> `A format...` """
    match = QUOTED_VALUE.match(raw_value.strip())
    if match is None:
        # unquoted definitions still lose a trailing xref list:
        return re.sub(r"\s*\[[^\]]*\]\s*$", "", raw_value).strip()
    return unescape_obo(match.group(1))


def _make_term(stanza: dict, ontology_name: str, source: str) -> OntologyTerm:
    definition = stanza.get("def", "")
    return OntologyTerm(
        id=stanza["id"],
        name=stanza["name"],
        definition=definition,
        source=source,
        ontology_name=ontology_name,
        definition_missing=definition == "",
    )


def _term_header_lines(text: str) -> List[int]:
    # goatools starts a record at a line beginning with [Term]
    return [number for number, line in enumerate(text.splitlines(), start=1) if line[:6].lower() == "[term]"]


def _header_value(text: str, key: str) -> str:
    for line in text.splitlines():
        if line.startswith("["):
            break
        name, sep, value = line.partition(":")
        if sep and name.strip() == key:
            return value.strip()
    return ""


def parse_obo_file(
    filepath: Union[str, Path],
    strict: bool = False,
    keep_obsolete: bool = False,
    ontology_name: str = "",
    report: Optional[ParseReport] = None,
) -> List[OntologyTerm]:
    """ Reads `[Term]` records with goatools and keeps id, name and def.

    Stanzas must be separated by blank lines, as goatools expects.
    [Typedef] and [Instance] stanzas are ignored.
    """
    report = report if report is not None else ParseReport()
    text = Path(filepath).read_text(encoding="utf-8")
    ontology_name = ontology_name or _header_value(text, "ontology")
    stanza_lines = _term_header_lines(text)

    try:
        records = list(OBOReader(str(filepath), optional_attrs={"def"}))
    except AssertionError as exc:
        # goatools asserts on a repeated id or name line within one stanza
        raise OntologyParseError(f"malformed [Term] stanza in {filepath}") from exc

    terms = []
    seen_ids = set()
    for position, record in enumerate(records):
        stanza_line = stanza_lines[position] if position < len(stanza_lines) else None
        if not record.item_id or not record.name:
            if strict:
                raise OntologyParseError("[Term] stanza without id or name", line=stanza_line)
            report.skip(f"[Term] stanza without id or name at line {stanza_line}")
            continue
        if record.is_obsolete and not keep_obsolete:
            continue
        if record.item_id in seen_ids:
            if strict:
                raise OntologyParseError(f"duplicate id {record.item_id}", line=stanza_line)
            report.skip(f"duplicate id {record.item_id} at line {stanza_line}")
            continue
        seen_ids.add(record.item_id)
        definition = parse_def_value(getattr(record, "defn", "") or "")
        stanza = {"id": record.item_id, "name": record.name, "def": definition}
        terms.append(_make_term(stanza, ontology_name, "obo"))

    if report.skipped:
        logger.warning("SKIPPED {} OBO STANZAS", report.skipped)
    return terms


def parse_obo(
    text: str,
    strict: bool = False,
    keep_obsolete: bool = False,
    ontology_name: str = "",
    report: Optional[ParseReport] = None,
) -> List[OntologyTerm]:
    """ parse_obo_file for an in-memory document; goatools only reads from disk. """
    with tempfile.TemporaryDirectory() as scratch:
        path = Path(scratch) / "document.obo"
        path.write_text(text, encoding="utf-8")
        return parse_obo_file(path, strict=strict, keep_obsolete=keep_obsolete,
                              ontology_name=ontology_name, report=report)


def contract_iri(iri: str) -> str:
    """ OBO-Graphs JSON uses IRIs where OBO files use CURIEs, so bring both to one form. """
    if iri.startswith(OBO_PURL):
        local = iri[len(OBO_PURL):]
        prefix, sep, number = local.rpartition("_")
        return f"{prefix}:{number}" if sep else local
    if iri.startswith(EDAM_BASE):
        local = iri[len(EDAM_BASE):]
        prefix, sep, number = local.rpartition("_")
        return f"{prefix}:{number}" if sep else local
    return iri


def _node_description(node: dict) -> str:
    meta = node.get("meta") or {}
    definition = (meta.get("definition") or {}).get("val")
    if definition:
        return definition
    if node.get("description"):
        return node["description"]
    for property_value in meta.get("basicPropertyValues") or []:
        if str(property_value.get("pred", "")).endswith("description") and property_value.get("val"):
            return property_value["val"]
    return ""


def parse_onto_json(
    text: str,
    strict: bool = False,
    keep_obsolete: bool = False,
    ontology_name: str = "",
    report: Optional[ParseReport] = None,
) -> List[OntologyTerm]:
    """ Parses an OBO-Graphs JSON document: graphs[].nodes[] with id, lbl and
    meta.definition.val (falling back to a description property). """
    report = report if report is not None else ParseReport()
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise OntologyParseError(f"not a JSON document: {exc.msg}", offset=exc.pos) from exc

    if not isinstance(document, dict):
        raise OntologyParseError(f"expected a JSON object with \"graphs\", got {type(document).__name__}")

    terms = []
    seen_ids = set()

    for graph_index, graph in enumerate(document.get("graphs", [])):
        graph_name = ontology_name or contract_iri(str(graph.get("id", "")))
        for node_index, node in enumerate(graph.get("nodes", [])):
            where = f"graphs[{graph_index}].nodes[{node_index}]"
            if not node.get("id") or not node.get("lbl"):
                if strict:
                    raise OntologyParseError(f"{where} has no id or lbl")
                report.skip(f"{where} has no id or lbl")
                continue
            meta = node.get("meta") or {}
            if meta.get("deprecated") and not keep_obsolete:
                continue

            term_id = contract_iri(node["id"])
            if term_id in seen_ids:
                if strict:
                    raise OntologyParseError(f"duplicate id {term_id} at {where}")
                report.skip(f"duplicate id {term_id} at {where}")
                continue
            seen_ids.add(term_id)

            stanza = {"id": term_id, "name": node["lbl"], "def": _node_description(node)}
            terms.append(_make_term(stanza, graph_name, "json"))

    if report.skipped:
        logger.warning("SKIPPED {} JSON NODES", report.skipped)
    return terms


def load_ontology_file(filepath: str, **parse_kwargs) -> List[OntologyTerm]:
    path = Path(filepath)
    logger.info("READING {}", path)
    parse_kwargs.setdefault("ontology_name", "")
    if path.suffix.lower() == ".obo":
        return parse_obo_file(path, **parse_kwargs)
    if path.suffix.lower() == ".json":
        return parse_onto_json(path.read_text(encoding="utf-8"), **parse_kwargs)
    raise OntologyError(f"unsupported ontology format: {path.suffix}")


def to_jsonld(terms: Iterable[OntologyTerm]) -> JsonLdDoc:
    terms = list(terms)
    if any(not term.id for term in terms):
        raise OntologyError("terms need non-empty ids")

    id_counts = Counter(term.id for term in terms)
    duplicates = sorted(term_id for term_id, count in id_counts.items() if count > 1)
    if duplicates:
        raise OntologyError(f"duplicate term ids: {', '.join(duplicates)}")

    graph = [
        {"@id": term.id, "name": term.name, "description": term.definition}
        for term in sorted(terms, key=lambda t: t.id)
    ]
    return JsonLdDoc(context=dict(JSONLD_CONTEXT), graph=graph)


def dumps_jsonld(doc: JsonLdDoc) -> str:
    return canonical_dumps({"@context": doc.context, "@graph": doc.graph}, indent=2) + "\n"


def loads_jsonld(text: str, ontology_name: str = "") -> List[OntologyTerm]:
    document = json.loads(text)
    return [
        OntologyTerm(
            id=node["@id"],
            name=node.get("name", ""),
            definition=node.get("description", ""),
            source="json",
            ontology_name=ontology_name,
            definition_missing=not node.get("description"),
        )
        for node in document.get("@graph", [])
    ]


def write_jsonld(terms: Iterable[OntologyTerm], filepath: str) -> Path:
    logger.info("WRITING {}", filepath)
    return atomic_write_text(filepath, dumps_jsonld(to_jsonld(terms)))


def main(ontology_filepaths: Iterable[str], output_directory: str, keep_obsolete: bool = False) -> list:
    """ Converts each ontology file to `<stem>.jsonld` in output_directory. """
    written_files = []
    for filepath in ontology_filepaths:
        report = ParseReport()
        terms = load_ontology_file(filepath, keep_obsolete=keep_obsolete, report=report)
        logger.info("PARSED {} TERMS FROM {} ({} SKIPPED)", len(terms), filepath, report.skipped)
        output_path = Path(output_directory) / f"{Path(filepath).stem}.jsonld"
        written_files.append(write_jsonld(terms, output_path))
    return written_files
