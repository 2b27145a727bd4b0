""" Builds the chat-format instruction dataset for the tool agent: one record per
(tool, version) help text, then one per Software Ontology term.

Each JSON line has this form:
{"messages":[{"content":"You are a bioinformatics tool expert...","role":"system"},
             {"content":"How do I use fastqc version 0.12.1? ...","role":"user"},
             {"content":"Usage: fastqc seqfile1 ...","role":"assistant"}]}
"""
from typing import Iterable, List, NamedTuple
import re
from loguru import logger
from ontology_parser import load_ontology_file
from tool_registry import load_tools
from utils import approx_token_count, max_words_for_tokens, write_jsonl

DEFAULT_TOKEN_CAP = 1000

SYSTEM_PROMPT = "You are a bioinformatics tool expert. Answer with accurate, version-specific usage."
TOOL_QUESTION = "How do I use {tool} version {version}? Show its command-line usage and options."
TERM_QUESTION = "What is {name} and what is it used for?"


class FinetuneRecord(NamedTuple):
    messages: tuple  # ((role, content), ...)
    token_estimate: int
    truncated: bool = False

    def to_dict(self) -> dict:
        return {"messages": [{"role": role, "content": content} for role, content in self.messages]}


def truncate_to_words(text: str, word_count: int) -> str:
    """ Cuts text after its word_count-th whitespace token, keeping the original spacing. """
    if word_count <= 0:
        return ""
    for index, match in enumerate(re.finditer(r"\S+", text), start=1):
        if index == word_count:
            return text[: match.end()]
    return text


def make_record(user: str, assistant: str, cap: int) -> FinetuneRecord:
    prompt_words = len(SYSTEM_PROMPT.split()) + len(user.split())
    token_estimate = approx_token_count(" ".join((SYSTEM_PROMPT, user, assistant)))
    truncated = False

    if token_estimate > cap:
        answer_words = max_words_for_tokens(cap) - prompt_words
        if answer_words < 1:
            raise ValueError(f"token cap {cap} leaves no room for an answer after the prompt {user!r}")
        assistant = truncate_to_words(assistant, answer_words)
        token_estimate = approx_token_count(" ".join((SYSTEM_PROMPT, user, assistant)))
        truncated = True

    return FinetuneRecord(
        messages=(("system", SYSTEM_PROMPT), ("user", user), ("assistant", assistant)),
        token_estimate=token_estimate,
        truncated=truncated,
    )


def build_finetune_dataset(tools: Iterable, terms: Iterable, cap: int = DEFAULT_TOKEN_CAP) -> List[FinetuneRecord]:
    """ Tools in rank order (versions in listing order), then terms by id. Pure function of
    its inputs. """
    if cap <= 0:
        raise ValueError("token cap must be > 0")

    records = []
    for tool in sorted(tools, key=lambda t: (t.rank, t.name)):
        version_order = {version: index for index, version in enumerate(tool.versions)}
        help_docs = sorted(tool.help_docs, key=lambda d: (version_order.get(d.version, len(version_order)), d.version))
        for doc in help_docs:
            user = TOOL_QUESTION.format(tool=tool.name, version=doc.version)
            records.append(make_record(user, doc.text.strip(), cap))

    for term in sorted(terms, key=lambda t: t.id):
        if not term.definition:
            logger.warning("SKIPPING TERM {} WITHOUT A DEFINITION", term.id)
            continue
        records.append(make_record(TERM_QUESTION.format(name=term.name), term.definition, cap))

    if not records:
        logger.warning("FINE-TUNE DATASET IS EMPTY")
    truncated = sum(record.truncated for record in records)
    if truncated:
        logger.info("TRUNCATED {} RECORDS TO {} TOKENS", truncated, cap)
    return records


def write_finetune_dataset(records: Iterable[FinetuneRecord], filepath: str):
    return write_jsonl((record.to_dict() for record in records), filepath)


def main(tools_filepath: str, ontology_filepaths: Iterable[str], output_filepath: str, cap: int = DEFAULT_TOKEN_CAP):
    tools = load_tools(tools_filepath)
    terms = [term for filepath in ontology_filepaths for term in load_ontology_file(filepath)]
    records = build_finetune_dataset(tools, terms, cap)
    write_finetune_dataset(records, output_filepath)
    return records
