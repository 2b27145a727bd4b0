""" Reads nf-core module/pipeline documentation into SourceDocs for the retrieval index.

A SourceDoc id is the file path relative to the corpus root, e.g.
`modules/fastqc/meta.yml`, so ids stay stable between ingests.
"""
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional
import yaml
from loguru import logger
from utils import ParseReport

DOC_SUFFIXES = (".md", ".markdown", ".txt", ".yml", ".yaml")


class SourceDoc(NamedTuple):
    id: str
    title: str
    text: str
    origin: str
    corpus: str = "nfcore"


def _title_for(relative_path: str, text: str, suffix: str) -> str:
    if suffix in (".yml", ".yaml"):
        try:
            meta = yaml.load(text, Loader=yaml.SafeLoader)
        except yaml.YAMLError:
            meta = None
        if isinstance(meta, dict) and meta.get("name"):
            return str(meta["name"])
    for line in text.splitlines():
        line = line.strip().lstrip("#").strip()
        if line:
            return line[:120]
    return relative_path


def ingest_nfcore(directory: str, report: Optional[ParseReport] = None) -> List[SourceDoc]:
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"nf-core documentation directory not found: {root}")

    report = report if report is not None else ParseReport()
    docs = []
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        if path.suffix.lower() not in DOC_SUFFIXES:
            continue
        relative_path = path.relative_to(root).as_posix()
        try:
            text = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            report.skip(f"{relative_path}: {exc}")
            continue
        if not text.strip():
            continue
        docs.append(
            SourceDoc(
                id=relative_path,
                title=_title_for(relative_path, text, path.suffix.lower()),
                text=text,
                origin=str(path),
            )
        )

    logger.info("READ {} DOCUMENTS FROM {} ({} UNREADABLE)", len(docs), root, report.skipped)
    return docs


def ontology_documents(terms: Iterable) -> List[SourceDoc]:
    """ One SourceDoc per ontology term so EDAM / Sequence Ontology definitions can join the
    workflow agent's retrieval corpus. """
    return [
        SourceDoc(
            id=term.id,
            title=term.name,
            text=f"{term.name}: {term.definition}" if term.definition else term.name,
            origin=term.ontology_name or term.source,
            corpus="ontology",
        )
        for term in sorted(terms, key=lambda t: t.id)
    ]
