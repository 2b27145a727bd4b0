import json
import pytest
from finetune_dataset import SYSTEM_PROMPT, TERM_QUESTION, build_finetune_dataset, main, truncate_to_words
from ontology_parser import OntologyTerm
from tool_registry import FixtureHelpProvider, ToolRecord, collect_all_help_docs, write_tools
from utils import approx_token_count


def fixture_tools(fixtures_dir):
    tools = [
        ToolRecord("samtools", 2, 50, ("1.17", "1.19")),
        ToolRecord("fastqc", 1, 90, ("0.11.9", "0.12.1")),
    ]
    return collect_all_help_docs(tools, FixtureHelpProvider(str(fixtures_dir / "help")))


def test_records_for_tools_then_terms(fixtures_dir, tmp_path):
    tools_path = tmp_path / "tools.json"
    write_tools(fixture_tools(fixtures_dir), str(tools_path))
    output = tmp_path / "dataset.jsonl"
    records = main(str(tools_path), [str(fixtures_dir / "ontology" / "swo_sample.obo")], str(output))

    assert len(records) == 7
    assert all(r.token_estimate <= 1000 for r in records)
    lines = [json.loads(line) for line in output.read_text().splitlines()]
    assert len(lines) == 7
    assert "fastqc version 0.11.9" in lines[0]["messages"][1]["content"]
    assert "samtools version 1.19" in lines[3]["messages"][1]["content"]
    assert lines[4]["messages"][1]["content"] == "What is FastQC and what is it used for?"
    for line in lines:
        assert [m["role"] for m in line["messages"]] == ["system", "user", "assistant"]
        assert line["messages"][0]["content"] == SYSTEM_PROMPT


def test_output_is_byte_identical(fixtures_dir, tmp_path):
    tools_path = tmp_path / "tools.json"
    write_tools(fixture_tools(fixtures_dir), str(tools_path))
    ontology = [str(fixtures_dir / "ontology" / "swo_sample.obo")]
    main(str(tools_path), ontology, str(tmp_path / "a.jsonl"))
    main(str(tools_path), ontology, str(tmp_path / "b.jsonl"))
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_long_help_is_truncated_to_cap(fixtures_dir):
    records = build_finetune_dataset(fixture_tools(fixtures_dir), [], cap=60)
    assert all(r.token_estimate <= 60 for r in records)
    assert all(r.truncated for r in records)
    assert records[0].messages[2][1].startswith("FastQC")


def test_terms_without_definition_are_skipped():
    terms = [OntologyTerm("SWO:1", "thing", "", "obo"), OntologyTerm("SWO:2", "tool", "A tool.", "obo")]
    records = build_finetune_dataset([], terms)
    assert len(records) == 1
    assert records[0].messages[2] == ("assistant", "A tool.")


def test_nothing_in_nothing_out():
    assert build_finetune_dataset([], []) == []


def test_truncate_keeps_spacing():
    assert truncate_to_words("a  b\nc d", 3) == "a  b\nc"
    assert truncate_to_words("a b", 5) == "a b"
    assert truncate_to_words("a b", 0) == ""


def test_smallest_cap_keeps_one_answer_word():
    term = OntologyTerm("SWO:3", "BWA", "A read aligner for short sequences.", "obo")
    prompt = " ".join((SYSTEM_PROMPT, TERM_QUESTION.format(name="BWA")))
    cap = approx_token_count(prompt + " A")

    (record,) = build_finetune_dataset([], [term], cap=cap)
    assert record.messages[2] == ("assistant", "A")
    assert record.truncated
    assert record.token_estimate == cap

    with pytest.raises(ValueError, match="no room for an answer"):
        build_finetune_dataset([], [term], cap=cap - 1)


def test_cap_smaller_than_prompt_is_rejected():
    term = OntologyTerm("SWO:3", "BWA", "A read aligner for short sequences.", "obo")
    with pytest.raises(ValueError, match="token cap 5"):
        build_finetune_dataset([], [term], cap=5)
