""" Loads a Biostars question-answer dump and categorizes its tags.

The dump has one JSON object per line:

{"id": "q1", "title": "...", "body": "...", "tags": ["rna-seq", "STAR"],
 "answers": [{"text": "...", "upvotes": 3, "accepted": true}, ...], "created_at": "2023-01-01T00:00:00Z"}

Only answers with at least `min_upvotes` upvotes are kept; a question without any
surviving answer is dropped.
"""
from collections import Counter
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple
import json
import re
import pandas as pd
from loguru import logger
from gateway import ChatBackend, ChatMessage, GatewayError, GenConfig
from utils import ParseReport, write_jsonl


class BiostarsParseError(Exception):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"{message} (line {line})" if line is not None else message)
        self.line = line


class TagCategory(str, Enum):
    TOOL = "tool"
    ANALYSIS = "analysis"
    DATA_FORMAT = "data_format"
    PROGRAMMING = "programming"
    OTHER = "other"


# shown verbatim to the classifier:
CATEGORY_DEFINITIONS = {
    TagCategory.TOOL: "software programs and packages used for bioinformatics analysis",
    TagCategory.ANALYSIS: "pipelines and analysis performed in bioinformatics field, such as rna-seq, alignment, variant calling",
    TagCategory.DATA_FORMAT: "genomics and other -omics data formats",
    TagCategory.PROGRAMMING: "programming languages, including wdl, nextflow and snakemake, and operation systems",
    TagCategory.OTHER: "for everything else",
}


class AnswerRecord(NamedTuple):
    text: str
    upvotes: int
    accepted: bool = False


class QARecord(NamedTuple):
    id: str
    title: str
    body: str
    tags: tuple
    answers: tuple
    created_at: Optional[str] = None

    def to_dict(self) -> dict:
        row = {
            "id": self.id,
            "title": self.title,
            "body": self.body,
            "tags": list(self.tags),
            "answers": [answer._asdict() for answer in self.answers],
        }
        if self.created_at is not None:
            row["created_at"] = self.created_at
        return row


def normalize_tags(tags: Iterable[str]) -> tuple:
    """ lowercase, stripped, deduplicated, first-seen order kept """
    normalized = []
    for tag in tags:
        tag = str(tag).strip().lower()
        if tag and tag not in normalized:
            normalized.append(tag)
    return tuple(normalized)


def _parse_answer(raw: dict) -> AnswerRecord:
    upvotes = int(raw.get("upvotes", 0))
    if upvotes < 0:
        raise ValueError("negative upvotes")
    return AnswerRecord(text=str(raw.get("text", "")), upvotes=upvotes, accepted=bool(raw.get("accepted", False)))


def parse_question(row: dict, min_upvotes: int) -> Optional[QARecord]:
    """ Returns None when no answer survives the upvote filter. """
    question_id = str(row["id"]).strip()
    if not question_id:
        raise ValueError("empty question id")

    answers = tuple(
        answer
        for answer in (_parse_answer(raw) for raw in row.get("answers", []))
        if answer.upvotes >= min_upvotes
    )
    if not answers:
        return None

    return QARecord(
        id=question_id,
        title=str(row.get("title", "")),
        body=str(row.get("body", "")),
        tags=normalize_tags(row.get("tags", [])),
        answers=answers,
        created_at=row.get("created_at"),
    )


def load_biostars(
    filepath: str,
    min_upvotes: int = 1,
    strict: bool = False,
    report: Optional[ParseReport] = None,
) -> List[QARecord]:
    path = Path(filepath)
    if not path.is_file():
        raise FileNotFoundError(f"Biostars dump not found: {path}")

    report = report if report is not None else ParseReport()
    records = []
    seen_ids = set()
    dropped = 0

    logger.info("READING {}", path)
    with open(path, "r", encoding="utf-8") as read_handle:
        for line_number, line in enumerate(read_handle, start=1):
            if not line.strip():
                continue
            try:
                record = parse_question(json.loads(line), min_upvotes)
            except (ValueError, KeyError, TypeError, AttributeError) as exc:
                if strict:
                    raise BiostarsParseError(f"malformed question: {exc}", line=line_number) from exc
                report.skip(f"line {line_number}: {exc}")
                continue

            if record is None:
                dropped += 1
                continue
            if record.id in seen_ids:
                if strict:
                    raise BiostarsParseError(f"duplicate question id {record.id}", line=line_number)
                report.skip(f"line {line_number}: duplicate id {record.id}")
                continue
            seen_ids.add(record.id)
            records.append(record)

    logger.info(
        "KEPT {} QUESTIONS, {} WITHOUT UPVOTED ANSWERS, {} MALFORMED", len(records), dropped, report.skipped
    )
    return records


def write_biostars(records: Iterable[QARecord], filepath: str) -> Path:
    return write_jsonl((record.to_dict() for record in records), filepath)


def best_answer(record: QARecord) -> AnswerRecord:
    """ Highest upvotes; ties go to the accepted answer, then the first one. """
    best = record.answers[0]
    for answer in record.answers[1:]:
        if answer.upvotes > best.upvotes or (
            answer.upvotes == best.upvotes and answer.accepted and not best.accepted
        ):
            best = answer
    return best


def category_prompt(tag: str) -> List[ChatMessage]:
    definitions = "\n".join(
        f"- {category.value}: {definition}" for category, definition in CATEGORY_DEFINITIONS.items()
    )
    return [
        ChatMessage(
            "system",
            "You classify Biostars question tags into exactly one of five categories:\n"
            f"{definitions}\n"
            "Answer with the category name only, one word, nothing else.",
        ),
        ChatMessage("user", f"Tag: {tag}"),
    ]


def parse_category(reply: str) -> TagCategory:
    """ Anything that is not one of the five names is `other`. """
    cleaned = re.sub(r"[^a-z_ -]", "", reply.strip().lower()).strip()
    cleaned = re.sub(r"[ -]+", "_", cleaned)
    try:
        return TagCategory(cleaned)
    except ValueError:
        return TagCategory.OTHER


class TagCategorizer:
    """ One backend call per distinct tag; failing tags fall back to `other` and are flagged. """

    def __init__(self, classifier: ChatBackend, gen: Optional[GenConfig] = None):
        self.classifier = classifier
        self.gen = gen or GenConfig(max_new_tokens=5)
        self.cache: Dict[str, TagCategory] = {}
        self.flagged = set()

    def categorize(self, tag: str) -> TagCategory:
        tag = tag.strip().lower()
        if tag not in self.cache:
            try:
                reply = self.classifier.complete(category_prompt(tag), self.gen)
                self.cache[tag] = parse_category(reply)
            except GatewayError as exc:
                logger.warning("COULD NOT CATEGORIZE TAG {}: {}", tag, exc)
                self.flagged.add(tag)
                self.cache[tag] = TagCategory.OTHER
        return self.cache[tag]


def categorize_tags(
    tags: Sequence[str], classifier
) -> List[Tuple[str, TagCategory]]:
    """ classifier is either a chat backend or a TagCategorizer (to share its cache). """
    categorizer = classifier if isinstance(classifier, TagCategorizer) else TagCategorizer(classifier)
    return [(tag.strip().lower(), categorizer.categorize(tag)) for tag in tags]


def summarize_tag_categories(categorized: Iterable[Tuple[str, TagCategory]]) -> pd.DataFrame:
    """ Counts per category over all (tag, category) pairs:

    +-------------+---------+---------+
    | category    |   count |   share |
    +=============+=========+=========+
    | tool        |      41 |   0.41  |
    | analysis    |      30 |   0.30  |
    ...
    """
    counts = Counter(TagCategory(category).value for _, category in categorized)
    summary = pd.DataFrame(
        {"category": [c.value for c in TagCategory], "count": [counts.get(c.value, 0) for c in TagCategory]}
    )
    total = summary["count"].sum()
    summary["share"] = summary["count"] / total if total else 0.0
    return summary.sort_values(["count", "category"], ascending=[False, True]).reset_index(drop=True)


def main(
    biostars_filepath: str,
    output_filepath: Optional[str] = None,
    min_upvotes: int = 1,
    classifier: Optional[ChatBackend] = None,
) -> Tuple[List[QARecord], Optional[pd.DataFrame]]:
    records = load_biostars(biostars_filepath, min_upvotes=min_upvotes)
    if output_filepath:
        write_biostars(records, output_filepath)

    summary = None
    if classifier is not None:
        categorizer = TagCategorizer(classifier)
        categorized = categorize_tags([tag for record in records for tag in record.tags], categorizer)
        summary = summarize_tag_categories(categorized)
        if categorizer.flagged:
            logger.warning("{} TAGS FELL BACK TO other", len(categorizer.flagged))
    return records, summary
