import pytest
from conftest import make_deps
from evaluate_rubric import (
    SUMMARY_COLUMNS,
    RubricError,
    RubricScore,
    aggregate_rubric,
    builtin_tasks,
    find_task,
    main,
    read_rubric_csv,
    render_rubric,
    rubric_cell,
    run_tasks,
)
from plot_utils import render_rubric_comparison
from trace_store import TraceStore


def test_builtin_tasks():
    tasks = builtin_tasks()
    assert [(t.level, t.kind) for t in tasks] == [
        ("easy", "concept"), ("easy", "code"),
        ("medium", "concept"), ("medium", "code"),
        ("hard", "concept"), ("hard", "code"),
    ]
    assert find_task("easy", "concept").prompt == "How would I provide quality metrics on FASTQ files?"
    assert find_task("medium", "code").prompt == (
        "What code or workflow do I need to write to align RNA-seq data against a human reference genome?"
    )
    assert "SARS-CoV-2" in find_task("hard", "code").prompt
    with pytest.raises(RubricError):
        find_task("expert", "concept")


def test_cell_means_and_counts(fixtures_dir):
    summary = main(str(fixtures_dir / "rubric_scores.csv"))
    assert list(summary.columns) == SUMMARY_COLUMNS
    assert len(summary) == 12
    cell = rubric_cell(summary, "easy", "concept", "system")
    assert cell["accuracy_mean"] == 4.5
    assert cell["n"] == 2
    hard_expert = rubric_cell(summary, "hard", "code", "expert")
    hard_system = rubric_cell(summary, "hard", "code", "system")
    assert (hard_expert["accuracy_mean"], hard_system["accuracy_mean"]) == (4.0, 2.0)
    assert list(summary.level[:4]) == ["easy"] * 4


def test_empty_scores():
    summary = aggregate_rubric([])
    assert summary.empty
    assert list(summary.columns) == SUMMARY_COLUMNS
    assert render_rubric(summary) == "no rubric scores"


def test_missing_cells_stay_absent():
    summary = aggregate_rubric([RubricScore.create("hard", "code", "expert", 4, 4, "r1")])
    assert len(summary) == 1
    assert rubric_cell(summary, "hard", "code", "system") is None


@pytest.mark.parametrize("accuracy, completeness", [(0, 3), (6, 3), (3, "good"), (3.5, 3)])
def test_scores_outside_the_scale(accuracy, completeness):
    with pytest.raises(RubricError):
        RubricScore.create("easy", "code", "system", accuracy, completeness, "r1")


def test_bad_csv_rows(tmp_path):
    path = tmp_path / "scores.csv"
    path.write_text("task_level,task_kind,subject,rater_id,accuracy,completeness\neasy,code,system,r1,4,9\n")
    with pytest.raises(RubricError, match="line 2"):
        read_rubric_csv(str(path))
    path.write_text("task_level,subject,accuracy\neasy,system,4\n")
    with pytest.raises(RubricError, match="lacks columns"):
        read_rubric_csv(str(path))


def test_render_rubric_grid(fixtures_dir):
    text = render_rubric(main(str(fixtures_dir / "rubric_scores.csv")))
    assert text.startswith("+")
    assert "accuracy_mean" in text


def test_run_tasks_stores_traces(pipeline_config, tmp_path):
    store = TraceStore(tmp_path / "traces")
    table = run_tasks(make_deps([5] * 6), pipeline_config, store)
    assert len(table) == 6
    assert list(table.rounds) == [1] * 6
    assert sorted(table.trace_id) == store.list_ids()


def test_rubric_figure(fixtures_dir, tmp_path):
    path = render_rubric_comparison(main(str(fixtures_dir / "rubric_scores.csv")), str(tmp_path / "rubric.png"))
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
