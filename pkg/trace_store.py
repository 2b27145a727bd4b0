""" Append-only, filesystem-backed store of pipeline traces: one canonical JSON file per
run, named by its run id, under a root directory.

Run ids are `<20-digit nanosecond timestamp>-<8 hex chars>`; the timestamp is strictly
increasing within a process, so sorting ids gives creation order.
"""
from pathlib import Path
from typing import List, Union
import json
import re
import secrets
import threading
import time
from loguru import logger
from orchestrator import TRACE_SCHEMA_VERSION, OrchestrationTrace
from utils import atomic_write_text, canonical_dumps

RUN_ID_PATTERN = re.compile(r"^\d{20}-[0-9a-f]{8}$")


class TraceNotFoundError(KeyError):
    def __str__(self) -> str:
        return f"no trace with id {self.args[0]!r}"


class TraceStore:
    _clock_lock = threading.Lock()
    _last_ns = 0

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    @classmethod
    def new_run_id(cls) -> str:
        with cls._clock_lock:
            now = max(time.time_ns(), cls._last_ns + 1)
            cls._last_ns = now
        return f"{now:020d}-{secrets.token_hex(4)}"

    def _path(self, run_id: str) -> Path:
        if not RUN_ID_PATTERN.match(run_id):
            raise TraceNotFoundError(run_id)
        return self.root / f"{run_id}.json"

    def store_trace(self, trace: OrchestrationTrace) -> str:
        run_id = self.new_run_id()
        envelope = {"schema_version": TRACE_SCHEMA_VERSION, "trace_id": run_id, "trace": trace.to_dict()}
        atomic_write_text(self._path(run_id), canonical_dumps(envelope, indent=2) + "\n", overwrite=False)
        logger.info("STORED TRACE {}", run_id)
        return run_id

    def load_trace(self, run_id: str) -> OrchestrationTrace:
        path = self._path(run_id)
        if not path.is_file():
            raise TraceNotFoundError(run_id)
        with open(path, "r", encoding="utf-8") as read_handle:
            return OrchestrationTrace.from_dict(json.load(read_handle)["trace"])

    def load_raw(self, run_id: str) -> dict:
        """ The stored envelope, as served over HTTP. """
        path = self._path(run_id)
        if not path.is_file():
            raise TraceNotFoundError(run_id)
        with open(path, "r", encoding="utf-8") as read_handle:
            return json.load(read_handle)

    def list_ids(self) -> List[str]:
        return sorted(path.stem for path in self.root.glob("*.json") if RUN_ID_PATTERN.match(path.stem))


def store_trace(store: TraceStore, trace: OrchestrationTrace) -> str:
    return store.store_trace(trace)


def load_trace(store: TraceStore, run_id: str) -> OrchestrationTrace:
    return store.load_trace(run_id)
