""" Figures for traces and rubric summaries. Uses the non-interactive Agg backend so
plots render on headless machines. """
from pathlib import Path
from typing import Iterable
import matplotlib as mpl

mpl.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from loguru import logger
from evaluate_rubric import KINDS, LEVELS, SUBJECTS

SUBJECT_COLORS = {"system": "#1f77b4", "expert": "#ff7f0e"}


def round_ratings_table(traces: Iterable) -> pd.DataFrame:
    """ One row per round of every trace:

    +---------+---------+----------+----------------+---------+
    |   trace |   round |   rating |   rounds_total |   final |
    +=========+=========+==========+================+=========+
    |       0 |       1 |        2 |              3 |   False |
    |       0 |       2 |        3 |              3 |   False |
    |       0 |       3 |        5 |              3 |    True |
    +---------+---------+----------+----------------+---------+
    """
    rows = []
    for trace_number, trace in enumerate(traces):
        for record in trace.rounds:
            rows.append(
                {
                    "trace": trace_number,
                    "round": record.round,
                    "rating": record.self_rating,
                    "rounds_total": len(trace.rounds),
                    "final": record.round == trace.final_round,
                }
            )
    return pd.DataFrame(rows, columns=["trace", "round", "rating", "rounds_total", "final"])


def render_round_ratings(traces: Iterable, filepath: str) -> Path:
    """ Mean self-rating of the returned answer against the number of rounds the query
    needed, with the individual round ratings behind it. """
    table = round_ratings_table(traces)
    figure, axis = plt.subplots(figsize=(6, 4))

    if not table.empty:
        final = table[table.final].groupby("rounds_total")["rating"].agg(["mean", "size"])
        axis.bar(final.index, final["mean"], color="#9ecae1", width=0.6, label="returned answer (mean)")
        for rounds_total, row in final.iterrows():
            axis.annotate(f"n={int(row['size'])}", (rounds_total, row["mean"]), ha="center", va="bottom", fontsize=8)
        jitter = np.random.default_rng(0).uniform(-0.15, 0.15, len(table))
        axis.scatter(table.rounds_total + jitter, table.rating, s=12, color="#08519c", alpha=0.6, label="round ratings")
        axis.set_xticks(sorted(table.rounds_total.unique()))
        axis.legend(loc="lower left", fontsize=8)

    axis.set_xlabel("rounds used")
    axis.set_ylabel("self-rating")
    axis.set_ylim(0, 5.5)
    axis.set_title("Self-ratings by number of rounds")
    return _save(figure, filepath)


def render_rubric_comparison(summary: pd.DataFrame, filepath: str) -> Path:
    """ System vs expert mean scores per level; one panel per (criterion, task kind).
    Cells without scores are left empty. """
    figure, axes = plt.subplots(2, 2, figsize=(9, 6), sharey=True)
    x = np.arange(len(LEVELS))
    width = 0.38

    for row_index, criterion in enumerate(("accuracy", "completeness")):
        for column_index, kind in enumerate(KINDS):
            axis = axes[row_index][column_index]
            for offset, subject in zip((-width / 2, width / 2), SUBJECTS):
                values = []
                for level in LEVELS:
                    cell = summary[(summary.level == level) & (summary.kind == kind) & (summary.subject == subject)]
                    values.append(float(cell[f"{criterion}_mean"].iloc[0]) if not cell.empty else np.nan)
                axis.bar(x + offset, values, width, label=subject, color=SUBJECT_COLORS[subject])
            axis.set_xticks(x)
            axis.set_xticklabels(LEVELS)
            axis.set_ylim(0, 5)
            axis.set_title(f"{criterion} / {kind}", fontsize=10)

    axes[0][0].legend(fontsize=8)
    figure.tight_layout()
    return _save(figure, filepath)


def _save(figure, filepath: str) -> Path:
    path = Path(filepath)
    path.parent.mkdir(parents=True, exist_ok=True)
    logger.info("WRITING {}", path)
    figure.savefig(path, dpi=120)
    plt.close(figure)
    return path
