""" The six built-in tasks and the human accuracy / completeness rubric.

Rubric scores come as CSV:

task_level,task_kind,subject,rater_id,accuracy,completeness
hard,code,expert,r1,4,4
hard,code,system,r1,2,3

and aggregate to one row per (level, kind, subject):

+---------+--------+-----------+-----------------+---------------------+-----+
| level   | kind   | subject   |   accuracy_mean |   completeness_mean |   n |
+=========+========+===========+=================+=====================+=====+
| hard    | code   | expert    |             4   |                 4   |   1 |
| hard    | code   | system    |             2   |                 3   |   1 |
+---------+--------+-----------+-----------------+---------------------+-----+
"""
from typing import Iterable, List, NamedTuple, Optional
import pandas as pd
from loguru import logger
from orchestrator import run_pipeline

LEVELS = ("easy", "medium", "hard")
KINDS = ("concept", "code")
SUBJECTS = ("system", "expert")
RUBRIC_COLUMNS = ("task_level", "task_kind", "subject", "rater_id", "accuracy", "completeness")
SUMMARY_COLUMNS = ["level", "kind", "subject", "accuracy_mean", "completeness_mean", "n"]


class RubricError(Exception):
    pass


class TaskSpec(NamedTuple):
    level: str
    kind: str
    prompt: str


_TASK_SUBJECTS = {
    "easy": "provide quality metrics on FASTQ files",
    "medium": "align RNA-seq data against a human reference genome",
    "hard": (
        "assemble, annotate, and analyze SARS-CoV-2 genomes from sequencing data to identify "
        "and characterize different variants of the virus"
    ),
}
_CONCEPT_OPENERS = {"easy": "How would I", "medium": "How do I", "hard": "How can I"}


def builtin_tasks() -> List[TaskSpec]:
    """ Three levels, each as a concept question and a code question. """
    tasks = []
    for level in LEVELS:
        subject = _TASK_SUBJECTS[level]
        tasks.append(TaskSpec(level, "concept", f"{_CONCEPT_OPENERS[level]} {subject}?"))
        tasks.append(TaskSpec(level, "code", f"What code or workflow do I need to write to {subject}?"))
    return tasks


def find_task(level: str, kind: str) -> TaskSpec:
    for task in builtin_tasks():
        if (task.level, task.kind) == (level, kind):
            return task
    raise RubricError(f"no built-in task for ({level}, {kind})")


class RubricScore(NamedTuple):
    task: TaskSpec
    subject: str
    accuracy: int
    completeness: int
    rater_id: str

    @classmethod
    def create(cls, level: str, kind: str, subject: str, accuracy, completeness, rater_id: str) -> "RubricScore":
        if subject not in SUBJECTS:
            raise RubricError(f"subject must be one of {', '.join(SUBJECTS)}, got {subject!r}")
        scores = []
        for label, value in (("accuracy", accuracy), ("completeness", completeness)):
            try:
                number = float(value)
            except (TypeError, ValueError):
                raise RubricError(f"{label} {value!r} is not a number") from None
            if not number.is_integer() or not 1 <= number <= 5:
                raise RubricError(f"{label} {value!r} outside the 1-5 scale")
            scores.append(int(number))
        return cls(find_task(level, kind), subject, scores[0], scores[1], str(rater_id))


def read_rubric_csv(filepath: str) -> List[RubricScore]:
    logger.info("READING {}", filepath)
    frame = pd.read_csv(filepath, dtype=str, keep_default_na=False)
    missing = [column for column in RUBRIC_COLUMNS if column not in frame.columns]
    if missing:
        raise RubricError(f"{filepath} lacks columns: {', '.join(missing)}")

    scores = []
    for row_number, row in enumerate(frame.itertuples(index=False), start=2):
        try:
            scores.append(
                RubricScore.create(
                    row.task_level.strip().lower(),
                    row.task_kind.strip().lower(),
                    row.subject.strip().lower(),
                    row.accuracy,
                    row.completeness,
                    row.rater_id,
                )
            )
        except RubricError as exc:
            raise RubricError(f"{filepath} line {row_number}: {exc}") from exc
    return scores


def aggregate_rubric(scores: Iterable[RubricScore]) -> pd.DataFrame:
    """ Means and counts per (level, kind, subject). Cells without scores are absent. """
    frame = pd.DataFrame(
        [
            {
                "level": s.task.level,
                "kind": s.task.kind,
                "subject": s.subject,
                "accuracy": s.accuracy,
                "completeness": s.completeness,
            }
            for s in scores
        ]
    )
    if frame.empty:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)

    summary = (
        frame.groupby(["level", "kind", "subject"])
        .agg(
            accuracy_mean=("accuracy", "mean"),
            completeness_mean=("completeness", "mean"),
            n=("accuracy", "size"),
        )
        .reset_index()
    )
    # task order rather than alphabetical
    summary["_level"] = summary["level"].map(LEVELS.index)
    summary["_kind"] = summary["kind"].map(KINDS.index)
    summary["_subject"] = summary["subject"].map(SUBJECTS.index)
    summary = summary.sort_values(["_level", "_kind", "_subject"]).drop(columns=["_level", "_kind", "_subject"])
    return summary.reset_index(drop=True)[SUMMARY_COLUMNS]


def rubric_cell(summary: pd.DataFrame, level: str, kind: str, subject: str) -> Optional[pd.Series]:
    selected = summary[(summary.level == level) & (summary.kind == kind) & (summary.subject == subject)]
    return None if selected.empty else selected.iloc[0]


def render_rubric(summary: pd.DataFrame) -> str:
    if summary.empty:
        return "no rubric scores"
    return summary.to_markdown(tablefmt="grid", index=False, floatfmt=".2f")


def run_tasks(deps, config, store=None, tasks: Optional[Iterable[TaskSpec]] = None) -> pd.DataFrame:
    """ Runs each task through the pipeline. Returns one row per task with its rounds,
    ratings and stored trace id. """
    rows = []
    for task in tasks or builtin_tasks():
        logger.info("RUNNING {} {} TASK", task.level.upper(), task.kind.upper())
        trace = run_pipeline(task.prompt, config, deps)
        rows.append(
            {
                "level": task.level,
                "kind": task.kind,
                "rounds": len(trace.rounds),
                "ratings": " ".join(str(r) for r in trace.ratings),
                "final_round": trace.final_round,
                "trace_id": store.store_trace(trace) if store is not None else "",
            }
        )
    return pd.DataFrame(rows, columns=["level", "kind", "rounds", "ratings", "final_round", "trace_id"])


def main(scores_filepath: str) -> pd.DataFrame:
    summary = aggregate_rubric(read_rubric_csv(scores_filepath))
    logger.info("AGGREGATED {} RUBRIC CELLS", len(summary))
    return summary
