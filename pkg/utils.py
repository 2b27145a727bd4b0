from dataclasses import dataclass, field
from math import ceil
from pathlib import Path
from typing import Callable, Iterable, Optional, Tuple, Type, TypeVar
import json
import os
import tempfile
import time
from loguru import logger

T = TypeVar("T")

# whitespace tokens are scaled by this factor to approximate model tokens:
TOKENS_PER_WORD = 1.3


@dataclass
class ParseReport:
    """ Collects what a lenient parser skipped so callers can report it. """

    skipped: int = 0
    messages: list = field(default_factory=list)

    def skip(self, message: str) -> None:
        self.skipped += 1
        self.messages.append(message)
        logger.debug("SKIPPING {}", message)


def approx_token_count(text: str) -> int:
    """ ceil(whitespace tokens x 1.3); no tokenizer dependency.

    >>> approx_token_count("a b c")
    4
    """
    word_count = len(text.split())
    # round before ceil so 10 words x 1.3 is 13, not 13.000000000000002 -> 14
    return ceil(round(word_count * TOKENS_PER_WORD, 6))


def max_words_for_tokens(cap: int) -> int:
    """ Largest whitespace token count whose estimate still fits within cap. """
    words = int(cap / TOKENS_PER_WORD) + 1
    while words > 0 and ceil(round(words * TOKENS_PER_WORD, 6)) > cap:
        words -= 1
    return words


def canonical_dumps(data, indent: Optional[int] = None) -> str:
    """ Sorted keys, UTF-8 friendly, LF only. Used for every file this repo writes
    so outputs are byte-identical across runs. """
    if indent is None:
        return json.dumps(data, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return json.dumps(data, sort_keys=True, ensure_ascii=False, indent=indent)


def write_jsonl(rows: Iterable[dict], filepath: str) -> Path:
    path = Path(filepath)
    path.parent.mkdir(parents=True, exist_ok=True)
    logger.info("WRITING {}", path)
    with open(path, "w", encoding="utf-8", newline="\n") as write_handle:
        for row in rows:
            write_handle.write(canonical_dumps(row))
            write_handle.write("\n")
    return path


def atomic_write_text(filepath: str, text: str, overwrite: bool = True) -> Path:
    """ Write to a temp file in the same directory, then rename over the target. """
    path = Path(filepath)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not overwrite and path.exists():
        raise FileExistsError(path)

    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as tmp_handle:
            tmp_handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    return path


def call_with_retries(
    func: Callable[[], T],
    retries: int,
    backoff_seconds: float = 0.5,
    retry_on: Tuple[Type[BaseException], ...] = (Exception,),
    label: str = "CALL",
    on_attempt: Optional[Callable[[int], None]] = None,
) -> T:
    """ Calls func at most 1 + retries times, sleeping backoff_seconds * 2**n between
    attempts. Only exceptions listed in retry_on are retried; the last one is re-raised.
    """
    attempt = 0
    while True:
        attempt += 1
        if on_attempt is not None:
            on_attempt(attempt)
        try:
            return func()
        except retry_on as exc:
            if attempt > retries:
                raise
            wait = backoff_seconds * (2 ** (attempt - 1))
            logger.warning(
                "{} FAILED ({}), RETRYING IN {:.2f}s ({}/{})", label, exc, wait, attempt, retries
            )
            if wait > 0:
                time.sleep(wait)
