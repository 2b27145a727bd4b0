""" Pulls the most downloaded tools from a GA4GH TRS v2 registry (BioContainers) and
collects each version's command-line help text.

A TRS listing page is a JSON array of tools:

[{"id": "fastqc", "name": "fastqc", "downloads": 123456,
  "versions": [{"id": "fastqc:0.12.1", "name": "0.12.1"}, ...]}, ...]

with the cursor for the next page in the `next_page` response header.
"""
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional
from urllib.parse import urljoin
import json
import shutil
import subprocess
import threading
import httpx
from loguru import logger
from utils import ParseReport, atomic_write_text, call_with_retries, canonical_dumps

TRS_PAGE_SIZE = 100
TRS_RETRIES = 3
TRS_BACKOFF_SECONDS = 0.5

# tried in order; the first non-empty capture wins:
HELP_FLAGS = (("--help",), ("-h",), ())

# exit codes of `docker run` / `podman run` itself: daemon or pull error, not runnable, not found
RUNTIME_EXIT_CODES = (125, 126, 127)


class RegistryError(Exception):
    pass


class HelpProviderUnavailable(Exception):
    pass


class HelpDoc(NamedTuple):
    tool_name: str
    version: str
    text: str
    source: str  # live-container | fixture


class ToolRecord(NamedTuple):
    name: str
    rank: int
    downloads: int
    versions: tuple
    help_docs: tuple = ()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "rank": self.rank,
            "downloads": self.downloads,
            "versions": list(self.versions),
            "help_docs": [doc._asdict() for doc in self.help_docs],
        }

    @classmethod
    def from_dict(cls, row: dict) -> "ToolRecord":
        return cls(
            name=row["name"],
            rank=int(row["rank"]),
            downloads=int(row["downloads"]),
            versions=tuple(row.get("versions", [])),
            help_docs=tuple(HelpDoc(**doc) for doc in row.get("help_docs", [])),
        )


class TrsClient:
    """ Minimal TRS v2 listing client: GET {base_url}/tools?limit=...&offset=0, then follow
    the `next_page` header until it is absent. """

    def __init__(
        self,
        base_url: str,
        page_size: int = TRS_PAGE_SIZE,
        retries: int = TRS_RETRIES,
        backoff_seconds: float = TRS_BACKOFF_SECONDS,
        timeout: float = 30.0,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.page_size = page_size
        self.retries = retries
        self.backoff_seconds = backoff_seconds
        self.requests_made = 0
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _get(self, url: str) -> httpx.Response:
        def attempt():
            self.requests_made += 1
            response = self._client.get(url)
            if response.status_code >= 500:
                response.raise_for_status()
            return response

        try:
            response = call_with_retries(
                attempt,
                retries=self.retries,
                backoff_seconds=self.backoff_seconds,
                retry_on=(httpx.TransportError, httpx.HTTPStatusError),
                label="TRS REQUEST",
            )
        except (httpx.TransportError, httpx.HTTPStatusError) as exc:
            raise RegistryError(f"registry request failed: {url}: {exc}") from exc

        if not response.is_success:
            raise RegistryError(f"registry returned HTTP {response.status_code} for {url}: {response.text[:200]}")
        return response

    def iter_tools(self) -> Iterable[dict]:
        url = f"{self.base_url}/tools?limit={self.page_size}&offset=0"
        seen_urls = set()

        while url:
            if url in seen_urls:
                raise RegistryError(f"pagination cursor loop at {url}")
            seen_urls.add(url)

            logger.debug("READING {}", url)
            response = self._get(url)
            try:
                page = response.json()
            except ValueError as exc:
                raise RegistryError(f"registry page is not JSON: {url}") from exc
            if not isinstance(page, list):
                raise RegistryError(f"registry page is not a JSON array: {url}")
            yield from page

            next_page = response.headers.get("next_page")
            url = urljoin(url, next_page) if next_page and page else None

    def close(self) -> None:
        self._client.close()


def _version_name(version) -> str:
    if isinstance(version, dict):
        name = version.get("name") or version.get("id") or ""
        # TRS version ids look like "fastqc:0.12.1"
        return str(name).split(":")[-1]
    return str(version)


def fetch_top_tools(registry: TrsClient, n: int) -> List[ToolRecord]:
    """ The n most downloaded tools, ties broken by name, ranked 1..k. """
    if n < 1:
        raise ValueError("n must be >= 1")

    tools = {}
    for raw in registry.iter_tools():
        name = raw.get("name") or raw.get("id")
        if not name:
            continue
        downloads = int(raw.get("downloads") or 0)
        # dict keeps first-seen order while dropping repeated versions
        versions = tuple(dict.fromkeys(v for v in (_version_name(v) for v in raw.get("versions") or []) if v))
        # a tool listed twice keeps its best-known download count
        if name not in tools or downloads > tools[name][0]:
            tools[name] = (downloads, versions)

    ordered = sorted(tools.items(), key=lambda item: (-item[1][0], item[0]))[:n]
    top_tools = [
        ToolRecord(name=name, rank=rank, downloads=downloads, versions=versions)
        for rank, (name, (downloads, versions)) in enumerate(ordered, start=1)
    ]
    logger.info("FETCHED TOP {} OF {} REGISTRY TOOLS", len(top_tools), len(tools))
    return top_tools


class FixtureHelpProvider:
    """ Reads captured help text from `<root>/<tool>/<version>.txt`. """

    source = "fixture"

    def __init__(self, root: str):
        self.root = Path(root)

    def check_available(self, tool_name: str) -> None:
        if not (self.root / tool_name).is_dir():
            raise HelpProviderUnavailable(f"no help fixtures for {tool_name} under {self.root}")

    def capture(self, tool_name: str, version: str) -> str:
        return (self.root / tool_name / f"{version}.txt").read_text(encoding="utf-8")


class ContainerHelpProvider:
    """ Runs `<runtime> run --rm <image> <tool> --help` (then -h, then no flag). """

    source = "live-container"

    def __init__(
        self,
        runtime: str = "docker",
        image_template: str = "quay.io/biocontainers/{tool}:{version}",
        timeout: float = 300.0,
    ):
        self.runtime = runtime
        self.image_template = image_template
        self.timeout = timeout

    def check_available(self, tool_name: str) -> None:
        if shutil.which(self.runtime) is None:
            raise HelpProviderUnavailable(f"container runtime {self.runtime!r} not found")

    def capture(self, tool_name: str, version: str) -> str:
        image = self.image_template.format(tool=tool_name, version=version)
        for flags in HELP_FLAGS:
            command = [self.runtime, "run", "--rm", image, tool_name, *flags]
            completed = subprocess.run(command, capture_output=True, text=True, timeout=self.timeout)
            if completed.returncode in RUNTIME_EXIT_CODES:
                raise subprocess.CalledProcessError(
                    completed.returncode, command, output=completed.stdout, stderr=completed.stderr
                )
            # many tools print usage on stderr and exit non-zero
            output = (completed.stdout or "") + (completed.stderr or "")
            if output.strip():
                return output
        return ""


def collect_help_docs(tool: ToolRecord, runner, report: Optional[ParseReport] = None) -> List[HelpDoc]:
    """ One HelpDoc per version with non-empty help output. A version that fails or is
    empty is skipped and counted; an unavailable provider skips the whole tool. """
    report = report if report is not None else ParseReport()
    if not tool.versions:
        return []

    try:
        runner.check_available(tool.name)
    except HelpProviderUnavailable as exc:
        logger.warning("SKIPPING {}: {}", tool.name, exc)
        report.skip(f"{tool.name}: provider unavailable")
        return []

    help_docs = []
    for version in dict.fromkeys(tool.versions):
        try:
            text = runner.capture(tool.name, version)
        except (OSError, subprocess.SubprocessError, UnicodeDecodeError) as exc:
            report.skip(f"{tool.name}:{version}: {exc}")
            continue
        if not text.strip():
            report.skip(f"{tool.name}:{version}: empty help output")
            continue
        help_docs.append(HelpDoc(tool_name=tool.name, version=version, text=text, source=runner.source))

    logger.info("COLLECTED {} HELP DOCS FOR {}", len(help_docs), tool.name)
    return help_docs


def collect_all_help_docs(
    tools: Iterable[ToolRecord], runner, max_in_flight: int = 4, report: Optional[ParseReport] = None
) -> List[ToolRecord]:
    """ Fills help_docs for every tool concurrently, results back in rank order. """
    tools = sorted(tools, key=lambda t: t.rank)
    report = report if report is not None else ParseReport()
    report_lock = threading.Lock()

    def collect(tool: ToolRecord) -> ToolRecord:
        tool_report = ParseReport()
        docs = collect_help_docs(tool, runner, tool_report)
        with report_lock:
            report.skipped += tool_report.skipped
            report.messages.extend(tool_report.messages)
        return tool._replace(help_docs=tuple(docs))

    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as executor:
        return list(executor.map(collect, tools))


def write_tools(tools: Iterable[ToolRecord], filepath: str) -> Path:
    logger.info("WRITING {}", filepath)
    return atomic_write_text(filepath, canonical_dumps([t.to_dict() for t in tools], indent=2) + "\n")


def load_tools(filepath: str) -> List[ToolRecord]:
    with open(filepath, "r", encoding="utf-8") as read_handle:
        return [ToolRecord.from_dict(row) for row in json.load(read_handle)]


def main(
    registry_url: str,
    top_n: int,
    runner,
    output_filepath: str,
    max_in_flight: int = 4,
    transport: Optional[httpx.BaseTransport] = None,
) -> List[ToolRecord]:
    registry = TrsClient(registry_url, transport=transport)
    try:
        tools = fetch_top_tools(registry, top_n)
    finally:
        registry.close()

    report = ParseReport()
    tools = collect_all_help_docs(tools, runner, max_in_flight=max_in_flight, report=report)
    if report.skipped:
        logger.warning("SKIPPED {} TOOL VERSIONS WITHOUT HELP TEXT", report.skipped)
    write_tools(tools, output_filepath)
    return tools
