""" Command-line entry point for every pipeline stage.

    python cli.py --config bioflow_config.yml ingest biostars --categorize
    python cli.py --config bioflow_config.yml index build
    python cli.py --config bioflow_config.yml ask "How would I provide quality metrics on FASTQ files?"
    python cli.py bench --pairs fixtures/qa71.jsonl --backend parrot

Exit codes: 0 success, 1 operational error, 2 usage error.
"""
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence
import argparse
import sys
from loguru import logger
import biostars_parser
import evaluate_benchmark
import evaluate_rubric
import finetune_dataset
import ontology_parser
import tool_registry
import vector_index
from config import AppConfig, ConfigError, build_pipeline_deps, chat_backend, embedding_backend, load_config, require_paths
from gateway import GatewayError
from nfcore_parser import ingest_nfcore
from orchestrator import OrchestratorError, PipelineError, run_pipeline
from plot_utils import render_round_ratings, render_rubric_comparison
from service import serve
from trace_store import TraceNotFoundError, TraceStore
from utils import write_jsonl

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2

OPERATIONAL_ERRORS = (
    ConfigError,
    OSError,
    ValueError,
    GatewayError,
    OrchestratorError,
    TraceNotFoundError,
    biostars_parser.BiostarsParseError,
    tool_registry.RegistryError,
    ontology_parser.OntologyParseError,
    ontology_parser.OntologyError,
    vector_index.VectorIndexError,
    evaluate_benchmark.BenchmarkError,
    evaluate_rubric.RubricError,
)


def configure_logging(verbose: bool) -> None:
    logger.remove()
    logger.add(lambda message: sys.stderr.write(message), level="DEBUG" if verbose else "INFO", format="{time:HH:mm:ss} {level: <7} {message}")


def cmd_ingest_biostars(args, config: AppConfig) -> int:
    source = args.input or config.paths.biostars
    if source is None:
        raise ConfigError("no Biostars dump given (--input or paths.biostars)")
    min_upvotes = config.ingest.min_upvotes if args.min_upvotes is None else args.min_upvotes
    classifier = chat_backend(config, "classifier") if args.categorize else None
    records, summary = biostars_parser.main(source, args.out, min_upvotes, classifier)
    print(f"questions: {len(records)}")
    if summary is not None:
        print(summary.to_markdown(tablefmt="grid", index=False, floatfmt=".3f"))
    return EXIT_OK


def cmd_ingest_tools(args, config: AppConfig) -> int:
    provider = args.provider or config.ingest.help_provider
    if provider == "fixture":
        help_directory = args.help_dir or config.paths.help
        if help_directory is None:
            raise ConfigError("the fixture help provider needs --help-dir or paths.help")
        runner = tool_registry.FixtureHelpProvider(help_directory)
    else:
        runner = tool_registry.ContainerHelpProvider()
    tools = tool_registry.main(
        args.registry or config.ingest.registry_url,
        args.top_n or config.ingest.top_n,
        runner,
        args.out or config.paths.tools,
        max_in_flight=config.ingest.max_in_flight,
    )
    print(f"tools: {len(tools)}, help docs: {sum(len(t.help_docs) for t in tools)}")
    return EXIT_OK


def cmd_ingest_nfcore(args, config: AppConfig) -> int:
    directory = args.input or config.paths.nfcore
    if directory is None:
        raise ConfigError("no nf-core directory given (--input or paths.nfcore)")
    docs = ingest_nfcore(directory)
    if args.out:
        write_jsonl((doc._asdict() for doc in docs), args.out)
    print(f"documents: {len(docs)}")
    return EXIT_OK


def cmd_ingest_ontology(args, config: AppConfig) -> int:
    filepaths = args.input or list(config.paths.ontologies)
    if not filepaths:
        raise ConfigError("no ontology files given (--input or paths.ontologies)")
    written = ontology_parser.main(filepaths, args.out or config.paths.output, keep_obsolete=args.keep_obsolete)
    for path in written:
        print(path)
    return EXIT_OK


def cmd_index_build(args, config: AppConfig) -> int:
    nfcore_directory = args.nfcore or config.paths.nfcore
    ontologies = args.ontology if args.ontology is not None else list(config.paths.ontologies)
    for path in [p for p in [nfcore_directory, *ontologies] if p]:
        if not Path(path).exists():
            raise ConfigError(f"corpus path does not exist: {path}")
    index = vector_index.main(
        nfcore_directory, ontologies, args.out or config.paths.index, embedding_backend(config), config.chunk_policy
    )
    print(f"indexed {index.size} chunks (dim {index.dim})")
    return EXIT_OK


def cmd_index_stats(args, config: AppConfig) -> int:
    filepath = args.index or config.paths.index
    if not Path(filepath).is_file():
        raise ConfigError(f"index file not found: {filepath}")
    index = vector_index.load_index(filepath)
    print(f"chunks: {index.size}  dim: {index.dim}  version: {index.version}")
    stats = vector_index.index_stats(index)
    if not stats.empty:
        print(stats.to_markdown(tablefmt="grid", index=False))
    return EXIT_OK


def cmd_dataset_build(args, config: AppConfig) -> int:
    tools_filepath = args.tools or config.paths.tools
    ontologies = args.ontology if args.ontology is not None else list(config.paths.ontologies)
    for path in [tools_filepath, *ontologies]:
        if not Path(path).exists():
            raise ConfigError(f"dataset input does not exist: {path}")
    records = finetune_dataset.main(
        tools_filepath, ontologies, args.out or config.paths.dataset, args.cap or config.ingest.token_cap
    )
    print(f"records: {len(records)}")
    return EXIT_OK


def cmd_ask(args, config: AppConfig) -> int:
    pipeline_config = config.pipeline
    if args.return_last:
        pipeline_config = replace(pipeline_config, return_last=True)
    deps = build_pipeline_deps(config)
    store = TraceStore(config.paths.traces)
    try:
        trace = run_pipeline(args.query, pipeline_config, deps)
    except PipelineError as exc:
        if exc.trace.rounds:
            print(f"partial trace: {store.store_trace(exc.trace)}")
        raise
    trace_id = store.store_trace(trace)
    print(trace.final_answer)
    print(f"rounds: {len(trace.rounds)} (ratings: {' '.join(str(r) for r in trace.ratings)})")
    print(f"trace: {trace_id}")
    return EXIT_OK


def cmd_bench(args, config: AppConfig) -> int:
    backends = {}
    for name in args.backend:
        if name in evaluate_benchmark.BUILTIN_BACKENDS:
            backends[name] = None
        elif name in config.backends or name == "classifier":
            backends[name] = chat_backend(config, name)
        else:
            raise ConfigError(f"unknown backend {name!r}: use parrot, empty or a configured role")
    report = evaluate_benchmark.main(
        args.pairs, backends, args.out, gen=config.gen, metric="recall" if args.recall else "f1"
    )
    print(evaluate_benchmark.render_report(report), end="")
    return EXIT_OK if all(row.valid for row in report.rows) else EXIT_ERROR


def cmd_tasks_list(args, config: AppConfig) -> int:
    for task in evaluate_rubric.builtin_tasks():
        print(f"{task.level}\t{task.kind}\t{task.prompt}")
    return EXIT_OK


def cmd_tasks_run(args, config: AppConfig) -> int:
    deps = build_pipeline_deps(config)
    table = evaluate_rubric.run_tasks(deps, config.pipeline, TraceStore(config.paths.traces))
    print(table.to_markdown(tablefmt="grid", index=False))
    return EXIT_OK


def cmd_rubric(args, config: AppConfig) -> int:
    summary = evaluate_rubric.main(args.scores)
    print(evaluate_rubric.render_rubric(summary))
    if args.plot:
        render_rubric_comparison(summary, args.plot)
    return EXIT_OK


def cmd_traces_list(args, config: AppConfig) -> int:
    for trace_id in TraceStore(config.paths.traces).list_ids():
        print(trace_id)
    return EXIT_OK


def cmd_traces_plot(args, config: AppConfig) -> int:
    store = TraceStore(config.paths.traces)
    trace_ids = args.ids or store.list_ids()
    if not trace_ids:
        raise ValueError(f"no traces stored under {config.paths.traces}")
    render_round_ratings([store.load_trace(trace_id) for trace_id in trace_ids], args.out)
    print(args.out)
    return EXIT_OK


def cmd_serve(args, config: AppConfig) -> int:
    if args.host or args.port:
        config = replace(config, host=args.host or config.host, port=args.port or config.port)
    require_paths(config, "index")
    serve(config)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bioflow", description="Bioinformatics workflow question answering.")
    parser.add_argument("--config", help="YAML configuration file (defaults only when omitted)")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    ingest = commands.add_parser("ingest", help="ingest a corpus").add_subparsers(dest="source", required=True)
    biostars = ingest.add_parser("biostars", help="filter a Biostars QA dump")
    biostars.add_argument("--input")
    biostars.add_argument("--out", help="write the filtered dump as JSON lines")
    biostars.add_argument("--min-upvotes", type=int)
    biostars.add_argument("--categorize", action="store_true", help="categorize tags with the classifier backend")
    biostars.set_defaults(handler=cmd_ingest_biostars)

    tools = ingest.add_parser("tools", help="top registry tools and their help text")
    tools.add_argument("--registry")
    tools.add_argument("--top-n", type=int)
    tools.add_argument("--provider", choices=("container", "fixture"))
    tools.add_argument("--help-dir")
    tools.add_argument("--out")
    tools.set_defaults(handler=cmd_ingest_tools)

    nfcore = ingest.add_parser("nfcore", help="read nf-core documentation")
    nfcore.add_argument("--input")
    nfcore.add_argument("--out", help="write the documents as JSON lines")
    nfcore.set_defaults(handler=cmd_ingest_nfcore)

    ontology = ingest.add_parser("ontology", help="convert OBO / OBO-Graphs JSON to JSON-LD")
    ontology.add_argument("--input", nargs="+")
    ontology.add_argument("--out", help="output directory")
    ontology.add_argument("--keep-obsolete", action="store_true")
    ontology.set_defaults(handler=cmd_ingest_ontology)

    index = commands.add_parser("index", help="build or inspect the vector index").add_subparsers(
        dest="action", required=True
    )
    build = index.add_parser("build")
    build.add_argument("--nfcore")
    build.add_argument("--ontology", nargs="*")
    build.add_argument("--out")
    build.set_defaults(handler=cmd_index_build)
    stats = index.add_parser("stats")
    stats.add_argument("--index")
    stats.set_defaults(handler=cmd_index_stats)

    dataset = commands.add_parser("dataset", help="fine-tune dataset").add_subparsers(dest="action", required=True)
    dataset_build = dataset.add_parser("build")
    dataset_build.add_argument("--tools")
    dataset_build.add_argument("--ontology", nargs="*")
    dataset_build.add_argument("--out")
    dataset_build.add_argument("--cap", type=int)
    dataset_build.set_defaults(handler=cmd_dataset_build)

    ask = commands.add_parser("ask", help="answer a question")
    ask.add_argument("query")
    ask.add_argument("--return-last", action="store_true", help="return the last round instead of the best rated")
    ask.set_defaults(handler=cmd_ask)

    bench = commands.add_parser("bench", help="ROUGE benchmark over QA pairs")
    bench.add_argument("--pairs", required=True)
    bench.add_argument("--backend", action="append", required=True, help="parrot, empty or a configured role")
    bench.add_argument("--recall", action="store_true", help="report recall instead of F1")
    bench.add_argument("--out", help="directory for report.json and report.txt")
    bench.set_defaults(handler=cmd_bench)

    tasks = commands.add_parser("tasks", help="the built-in tasks").add_subparsers(dest="action", required=True)
    tasks.add_parser("list").set_defaults(handler=cmd_tasks_list)
    tasks.add_parser("run").set_defaults(handler=cmd_tasks_run)

    rubric = commands.add_parser("rubric", help="aggregate human rubric scores")
    rubric.add_argument("scores")
    rubric.add_argument("--plot", help="write a system vs expert comparison figure")
    rubric.set_defaults(handler=cmd_rubric)

    traces = commands.add_parser("traces", help="stored traces").add_subparsers(dest="action", required=True)
    traces.add_parser("list").set_defaults(handler=cmd_traces_list)
    plot = traces.add_parser("plot")
    plot.add_argument("--out", required=True)
    plot.add_argument("--ids", nargs="*")
    plot.set_defaults(handler=cmd_traces_plot)

    serve_parser = commands.add_parser("serve", help="run the HTTP service")
    serve_parser.add_argument("--host")
    serve_parser.add_argument("--port", type=int)
    serve_parser.set_defaults(handler=cmd_serve)
    return parser


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    configure_logging(args.verbose)
    try:
        config = load_config(args.config)
        return args.handler(args, config)
    except OPERATIONAL_ERRORS as exc:
        logger.error("{}: {}", type(exc).__name__, exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main(argv: Optional[List[str]] = None) -> None:
    sys.exit(run_cli(argv))


if __name__ == "__main__":
    main()
