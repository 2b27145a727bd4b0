""" Scores chat backends against Biostars question-answer pairs with ROUGE.

For every backend and pair the query is the question title and body, the reference is
the best answer (most upvotes, then accepted, then first), and the candidate is the
backend's completion. Means are taken over the pairs a backend answered; a backend
that fails on more than 20% of the pairs is reported as invalid.

report.txt has the form:

Model      ROUGE-1 (F1)    ROUGE-2 (F1)    ROUGE-L (F1)    ROUGE-L-SUM (F1)
GPT-4             0.183           0.029           0.103               0.125
"""
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple
import json
import pandas as pd
from loguru import logger
from biostars_parser import QARecord, best_answer, load_biostars
from gateway import ChatBackend, ChatMessage, GatewayError, GenConfig, ScriptedChatBackend
from rouge_metrics import ROUGE_TYPES, mean_scores, score_pair
from utils import atomic_write_text, canonical_dumps

MAX_SKIP_SHARE = 0.2
METRIC_FIELDS = {"f1": "F1", "recall": "Recall"}
COLUMN_TITLES = ("ROUGE-1", "ROUGE-2", "ROUGE-L", "ROUGE-L-SUM")
BUILTIN_BACKENDS = ("parrot", "empty")


class BenchmarkError(Exception):
    pass


class BenchRow(NamedTuple):
    name: str
    rouge1: float
    rouge2: float
    rougeL: float
    rougeLsum: float
    scored: int = 0
    skipped: int = 0
    valid: bool = True


class BenchReport(NamedTuple):
    rows: Tuple[BenchRow, ...]
    pair_count: int
    qa_source: str
    metric: str = "f1"

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "pair_count": self.pair_count,
            "qa_source": self.qa_source,
            "rows": [row._asdict() for row in self.rows],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BenchReport":
        return cls(
            rows=tuple(BenchRow(**row) for row in data["rows"]),
            pair_count=int(data["pair_count"]),
            qa_source=data["qa_source"],
            metric=data.get("metric", "f1"),
        )


def pair_query(record: QARecord) -> str:
    return "\n\n".join(part.strip() for part in (record.title, record.body) if part.strip())


def builtin_backend(name: str, pairs: Sequence[QARecord]) -> ChatBackend:
    """ parrot answers every pair with its reference; empty answers nothing. """
    if name == "parrot":
        return ScriptedChatBackend(table={pair_query(p): best_answer(p).text for p in pairs}, name="parrot")
    if name == "empty":
        return ScriptedChatBackend(responder=lambda _messages: "", name="empty")
    raise BenchmarkError(f"unknown built-in backend {name!r}; choose from {', '.join(BUILTIN_BACKENDS)}")


def score_backend(
    name: str,
    backend: ChatBackend,
    pairs: Sequence[QARecord],
    gen: GenConfig,
    metric: str = "f1",
    max_workers: int = 4,
) -> BenchRow:
    def score(record: QARecord):
        try:
            candidate = backend.complete([ChatMessage("user", pair_query(record))], gen)
        except (GatewayError, ValueError) as exc:
            logger.warning("{} FAILED ON {}: {}", name.upper(), record.id, exc)
            return None
        return score_pair(candidate, best_answer(record).text)

    # executor.map keeps input order
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
        results = list(executor.map(score, pairs))

    scored = [result for result in results if result is not None]
    skipped = len(results) - len(scored)
    valid = bool(pairs) and skipped <= MAX_SKIP_SHARE * len(pairs)
    if not valid:
        logger.error("{} SKIPPED {} OF {} PAIRS, RUN MARKED INVALID", name.upper(), skipped, len(pairs))
    return BenchRow(name, *mean_scores(scored, metric), scored=len(scored), skipped=skipped, valid=valid)


def run_benchmark(
    backends: Iterable[Tuple[str, ChatBackend]],
    pairs: Sequence[QARecord],
    gen: Optional[GenConfig] = None,
    qa_source: str = "",
    metric: str = "f1",
    max_workers: int = 4,
) -> BenchReport:
    if metric not in METRIC_FIELDS:
        raise BenchmarkError(f"metric must be one of {', '.join(METRIC_FIELDS)}")
    if not pairs:
        raise BenchmarkError("no question-answer pairs to score")
    gen = gen or GenConfig()
    rows = tuple(
        score_backend(name, backend, pairs, gen, metric, max_workers) for name, backend in backends
    )
    if not rows:
        raise BenchmarkError("no backends to score")
    return BenchReport(rows=rows, pair_count=len(pairs), qa_source=qa_source, metric=metric)


def report_dataframe(report: BenchReport) -> pd.DataFrame:
    label = METRIC_FIELDS[report.metric]
    return pd.DataFrame(
        [[row.name, *(getattr(row, rouge_type) for rouge_type in ROUGE_TYPES)] for row in report.rows],
        columns=["Model", *(f"{title} ({label})" for title in COLUMN_TITLES)],
    )


def render_report(report: BenchReport) -> str:
    table = report_dataframe(report).to_markdown(tablefmt="plain", floatfmt=".3f", index=False)
    footer = [f"{report.pair_count} QA pairs from {report.qa_source or 'unknown source'}"]
    footer.extend(
        f"INVALID: {row.name} failed on {row.skipped} of {row.scored + row.skipped} pairs"
        for row in report.rows
        if not row.valid
    )
    return table + "\n\n" + "\n".join(footer) + "\n"


def write_report(report: BenchReport, output_directory: str) -> Dict[str, Path]:
    directory = Path(output_directory)
    json_path = atomic_write_text(directory / "report.json", canonical_dumps(report.to_dict(), indent=2) + "\n")
    text_path = atomic_write_text(directory / "report.txt", render_report(report))
    logger.info("WROTE {} AND {}", json_path, text_path)
    return {"json": json_path, "text": text_path}


def load_report(filepath: str) -> BenchReport:
    with open(filepath, "r", encoding="utf-8") as read_handle:
        return BenchReport.from_dict(json.load(read_handle))


def main(
    pairs_filepath: str,
    backends: Dict[str, ChatBackend],
    output_directory: Optional[str] = None,
    gen: Optional[GenConfig] = None,
    metric: str = "f1",
) -> BenchReport:
    """ backends maps names to chat backends; a None value selects the built-in backend
    of that name. """
    pairs = load_biostars(pairs_filepath, min_upvotes=0)
    resolved = [(name, backend or builtin_backend(name, pairs)) for name, backend in backends.items()]
    report = run_benchmark(resolved, pairs, gen, qa_source=Path(pairs_filepath).name, metric=metric)
    if output_directory:
        write_report(report, output_directory)
    return report
