"""Command-line entry points.

    cxnprobe probe global|local ...      ad-hoc affinity on one sentence
    cxnprobe eval cec|multithat|idioms|cogs|npn|cc|all ...
    cxnprobe corpus count|classify ...
    cxnprobe npn generate ...
    cxnprobe report assemble|correlate ...

Configuration comes from an optional TOML/JSON file plus flag overrides
(flags > file > defaults). Every eval run writes scores.jsonl (full
precision), a rendered table, and a manifest (config hash, gateway info,
dataset checksums, seed) sufficient to regenerate the table.

Exit codes: 0 ok, 1 config error, 2 gateway/transport error, 3 dataset
error. Partial results are flushed before a nonzero exit.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .affinity import analyze_with, try_global, try_local
from .corpus import (NgramQuery, classify_usage, count_ngrams,
                     extract_occurrences)
from .datasets import (API_KEY_ENV, GenerationFailure, LoadResult,
                       common_vocab_filter, generate_npn, http_chat_endpoint,
                       load_cec, load_cogs, load_magpie, load_npn,
                       multithat_subset, write_jsonl)
from .errors import (CxnProbeError, EmptyFilter, EncodingError, LengthError,
                     MissingCounts, SchemaError, TransportError)
from .evals import (EvalScore, TaggerPolicy, correlate_with_benchmark,
                    eval_cc_schematic, eval_cec_auc, eval_fixed_slots,
                    eval_idioms, eval_multithat, eval_npn)
from .gateway import CachingGateway, DistributionCache, open_gateway
from .report import (ReportTable, benchmark_macro_averages, load_scores_jsonl,
                     reference_scores)

CACHE_DIR_ENV = "CXNPROBE_CACHE_DIR"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_GATEWAY = 2
EXIT_DATASET = 3

EVAL_NAMES = ("cec", "multithat", "idioms", "cogs", "npn", "cc")


@dataclass
class RunConfig:
    gateway: str = "mock"
    datasets: dict = field(default_factory=dict)  # dataset name -> path
    nucleus_q: float = 0.85
    cc_weighting: str = "mass"
    tagger: str = "external"
    npn_filter: str = "acceptable"
    npn_counts: str | None = None  # TSV of trigram counts
    threshold: float = 0.9
    common_vocab: list = field(default_factory=list)  # extra gateway specs
    output: str = "out"
    format: str = "tsv"
    cache_dir: str | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.nucleus_q <= 1.0:
            raise ValueError(f"nucleus_q must be in (0, 1], got {self.nucleus_q}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.format not in ("tsv", "json", "markdown"):
            raise ValueError(f"format must be tsv/json/markdown, got {self.format!r}")

    @classmethod
    def load(cls, path: str | None, overrides: dict) -> "RunConfig":
        data: dict = {}
        if path:
            raw = Path(path).read_bytes()
            if path.endswith(".toml"):
                data = tomllib.loads(raw.decode("utf-8"))
            else:
                data = json.loads(raw.decode("utf-8"))
        data.update({k: v for k, v in overrides.items() if v is not None})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def config_hash(self) -> str:
        canonical = json.dumps(asdict(self), sort_keys=True).encode("utf-8")
        return hashlib.sha256(canonical).hexdigest()


def _sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _open_configured_gateway(config: RunConfig):
    gw = open_gateway(config.gateway, seed=config.seed)
    cache_dir = config.cache_dir or os.environ.get(CACHE_DIR_ENV)
    if cache_dir:
        namespace = gw.cache_namespace().replace("/", "_").replace(":", "_")
        cache = DistributionCache(Path(cache_dir) / f"{namespace}.cache")
        gw = CachingGateway(gw, cache)
    return gw


def _load_dataset(config: RunConfig, name: str,
                  loader: Callable[[str], LoadResult]) -> LoadResult:
    path = config.datasets.get(name)
    if not path:
        raise SchemaError(f"no path configured for dataset {name!r}")
    if not Path(path).exists():
        raise SchemaError(f"dataset file not found: {path}")
    return loader(path)


def _read_counts_tsv(path: str) -> dict[tuple[str, str, str], int]:
    counts: dict[tuple[str, str, str], int] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            pattern, count = line.rsplit("\t", 1)
            words = tuple(pattern.split())
            if len(words) == 3:
                counts[words] = int(count)
    return counts


def _run_evals(config: RunConfig, which: Sequence[str], gw) -> tuple[list[EvalScore], dict]:
    scores: list[EvalScore] = []
    dataset_files: dict[str, str] = {}

    def note(name: str) -> str:
        path = config.datasets.get(name)
        if path:
            dataset_files[name] = path
        return path

    vocab_gateways = [gw]
    vocab_gateways += [open_gateway(spec, seed=config.seed)
                       for spec in config.common_vocab]

    def records_for(name: str, loader) -> list:
        result = _load_dataset(config, name, loader)
        note(name)
        records = result.records
        if config.common_vocab:
            kept, dropped = common_vocab_filter(records, vocab_gateways)
            print(f"common-vocabulary filter ({name}): kept {len(kept)} "
                  f"of {len(records)} records", file=sys.stderr)
            records = kept
        return records

    tagger = TaggerPolicy(mode=config.tagger)
    try:
        for eval_name in which:
            if eval_name == "cec":
                scores.append(eval_cec_auc(records_for("cec", load_cec), gw))
            elif eval_name == "multithat":
                records = records_for("cec", load_cec)
                scores.append(eval_multithat(multithat_subset(records), gw))
            elif eval_name == "idioms":
                scores.append(eval_idioms(records_for("magpie", load_magpie), gw))
            elif eval_name == "cogs":
                scores.extend(eval_fixed_slots(records_for("cogs", load_cogs), gw))
            elif eval_name == "npn":
                counts = (_read_counts_tsv(config.npn_counts)
                          if config.npn_counts else None)
                scores.extend(eval_npn(records_for("npn", load_npn), gw,
                                       which=config.npn_filter, counts=counts))
            elif eval_name == "cc":
                scores.append(eval_cc_schematic(records_for("cogs", load_cogs),
                                                gw, tagger=tagger,
                                                q=config.nucleus_q,
                                                weighting=config.cc_weighting))
            else:
                raise ValueError(f"unknown eval {eval_name!r}")
    finally:
        for extra in vocab_gateways[1:]:
            extra.close()
    return scores, dataset_files


def _write_outputs(config: RunConfig, scores: list[EvalScore],
                   dataset_files: dict, gw) -> None:
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "scores.jsonl", "w", encoding="utf-8") as fh:
        for score in scores:
            fh.write(json.dumps(score.to_dict(), sort_keys=True) + "\n")
            fh.flush()
    table = ReportTable.from_scores(scores)
    suffix = {"tsv": "tsv", "json": "json", "markdown": "md"}[config.format]
    (out / f"table.{suffix}").write_text(table.render(config.format), "utf-8")

    try:
        info = gw.handshake()
        gateway_info = {"model_name": info.model_name,
                        "vocab_size": info.vocab_size,
                        "mask_token_id": info.mask_token_id,
                        "max_positions": info.max_positions}
    except CxnProbeError as exc:
        gateway_info = {"unavailable": str(exc)}
    manifest = {
        "config_hash": config.config_hash(),
        "config": asdict(config),
        "gateway": gateway_info,
        "datasets": {name: _sha256_file(path)
                     for name, path in sorted(dataset_files.items())},
        "seed": config.seed,
        "version": __version__,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", "utf-8")


# --- commands ---------------------------------------------------------------

def _cmd_probe(args, config: RunConfig) -> int:
    gw = _open_configured_gateway(config)
    with gw:
        s = analyze_with(gw, args.sentence, "probe")
        if args.kind == "global":
            record = try_global(gw, s, args.i)
        else:
            record = try_local(gw, s, args.i, args.j)
    print(json.dumps(record.to_dict(), sort_keys=True))
    return EXIT_OK


def _cmd_eval(args, config: RunConfig) -> int:
    which = EVAL_NAMES if args.which == "all" else (args.which,)
    gw = _open_configured_gateway(config)
    scores: list[EvalScore] = []
    dataset_files: dict = {}
    try:
        with gw:
            try:
                scores, dataset_files = _run_evals(config, which, gw)
            finally:
                # flush whatever completed, even ahead of a nonzero exit
                _write_outputs(config, scores, dataset_files, gw)
    except (SchemaError, EmptyFilter, MissingCounts) as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except (TransportError, EncodingError, LengthError) as exc:
        print(f"gateway error: {exc}", file=sys.stderr)
        return EXIT_GATEWAY
    if isinstance(gw, CachingGateway):
        print(f"cache misses: {gw.miss_calls}", file=sys.stderr)
    for score in scores:
        print(f"{score.model}\t{score.eval_name}\t{score.value:.1f}"
              f"\t(n={score.n_used}, skipped={score.n_skipped})")
    return EXIT_OK


def _cmd_corpus_count(args, config: RunConfig) -> int:
    queries = [NgramQuery(tuple(p.split())) for p in args.patterns]
    result = count_ngrams(args.corpus, queries)
    lines = [f"{query}\t{result.counts[query]}" for query in queries]
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text, "utf-8")
    else:
        sys.stdout.write(text)
    for shard, error in result.errors:
        print(f"skipped shard {shard}: {error}", file=sys.stderr)
    return EXIT_OK


def _cmd_corpus_classify(args, config: RunConfig) -> int:
    query = NgramQuery(tuple(args.pattern.split()))
    if query.n != 2:
        print("classify needs a two-word pattern", file=sys.stderr)
        return EXIT_CONFIG
    gw = _open_configured_gateway(config)
    with gw:
        occurrences = extract_occurrences(args.corpus, query)
        summary = classify_usage(occurrences, gw, threshold=config.threshold)
    out_fh = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for c in summary.classifications:
            out_fh.write(json.dumps({
                "sentence": c.sentence,
                "phrase_offsets": [list(c.phrase_offsets[0]), list(c.phrase_offsets[1])],
                "affinities": list(c.affinities),
                "constructional": c.constructional,
            }, sort_keys=True) + "\n")
    finally:
        if args.output:
            out_fh.close()
    print(f"constructional: {summary.n_constructional}/{summary.n_total}"
          f" (skipped {summary.n_skipped})", file=sys.stderr)
    return EXIT_OK


def _cmd_npn_generate(args, config: RunConfig) -> int:
    if not args.output:
        print("npn generate needs --output FILE", file=sys.stderr)
        return EXIT_CONFIG
    nouns = [w.strip() for w in Path(args.nouns).read_text("utf-8").splitlines()
             if w.strip()]
    preps = args.preps.split(",")
    llm = http_chat_endpoint(args.endpoint, model=args.model)
    records, failures = generate_npn(nouns, preps, llm, retries=args.retries)
    write_jsonl(records, args.output)
    for failure in failures:
        print(f"no valid generation for {failure.noun!r} {failure.preposition!r} "
              f"after {len(failure.attempts)} attempts", file=sys.stderr)
    print(f"generated {len(records)} candidates "
          f"({len(failures)} failures)", file=sys.stderr)
    return EXIT_OK if not failures else EXIT_DATASET


def _cmd_report_assemble(args, config: RunConfig) -> int:
    scores: list[EvalScore] = []
    for path in args.scores:
        scores.extend(load_scores_jsonl(path))
    table = ReportTable.from_scores(scores)
    text = table.render(config.format)
    if args.output:
        Path(args.output).write_text(text, "utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_report_correlate(args, config: RunConfig) -> int:
    if args.table:
        table_values = ReportTable.from_json(Path(args.table).read_text("utf-8")).values()
    else:
        table_values = reference_scores()
    if args.benchmark:
        benchmark = {m: row["macro_avg"] if isinstance(row, dict) else float(row)
                     for m, row in json.loads(Path(args.benchmark).read_text("utf-8")).items()}
    else:
        benchmark = benchmark_macro_averages()
    report = correlate_with_benchmark(table_values, benchmark)
    print(f"mean r = {report.mean_r:.2f}  sd = {report.sd_r:.2f}  "
          f"over {len(report.per_column)} columns, {report.n_models} models")
    for column, r in sorted(report.per_column.items()):
        print(f"  {column}\tr={r:+.4f}")
    for column, reason in sorted(report.excluded.items()):
        print(f"  {column}\texcluded: {reason}")
    return EXIT_OK


# --- argument parsing ---------------------------------------------------------

def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML or JSON config file")
    parser.add_argument("--gateway", help="mock | spawn:<cmd> | tcp:<host:port>")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--output", help="output directory (eval) or file")
    parser.add_argument("--format", choices=("tsv", "json", "markdown"))
    parser.add_argument("--cache-dir", dest="cache_dir")
    parser.add_argument("--nucleus-q", dest="nucleus_q", type=float)
    parser.add_argument("--cc-weighting", dest="cc_weighting",
                        choices=("mass", "count"))
    parser.add_argument("--tagger", choices=("external", "rule_based"))
    parser.add_argument("--npn-filter", dest="npn_filter",
                        choices=("all", "acceptable", "acceptable_unseen"))
    parser.add_argument("--npn-counts", dest="npn_counts")
    parser.add_argument("--threshold", type=float)
    parser.add_argument("--common-vocab", dest="common_vocab", action="append",
                        metavar="GATEWAY", default=None,
                        help="extra gateway whose tokenization must also "
                             "accept every target (repeatable)")
    parser.add_argument("--dataset", action="append", default=None,
                        metavar="NAME=PATH", help="dataset path (repeatable)")


def _config_from_args(args) -> RunConfig:
    overrides = {
        "gateway": getattr(args, "gateway", None),
        "seed": getattr(args, "seed", None),
        "output": getattr(args, "output", None),
        "format": getattr(args, "format", None),
        "cache_dir": getattr(args, "cache_dir", None),
        "nucleus_q": getattr(args, "nucleus_q", None),
        "cc_weighting": getattr(args, "cc_weighting", None),
        "tagger": getattr(args, "tagger", None),
        "npn_filter": getattr(args, "npn_filter", None),
        "npn_counts": getattr(args, "npn_counts", None),
        "threshold": getattr(args, "threshold", None),
        "common_vocab": getattr(args, "common_vocab", None),
    }
    config = RunConfig.load(getattr(args, "config", None), overrides)
    for item in getattr(args, "dataset", None) or []:
        name, _, path = item.partition("=")
        if not path:
            raise ValueError(f"--dataset needs NAME=PATH, got {item!r}")
        config.datasets[name] = path
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cxnprobe",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    probe = sub.add_parser("probe", help="ad-hoc affinity on one sentence")
    probe.add_argument("kind", choices=("global", "local"))
    probe.add_argument("--sentence", required=True)
    probe.add_argument("-i", type=int, required=True, help="target word index")
    probe.add_argument("-j", type=int, help="context word index (local)")
    _add_config_flags(probe)
    probe.set_defaults(func=_cmd_probe)

    ev = sub.add_parser("eval", help="run construction evaluations")
    ev.add_argument("which", choices=EVAL_NAMES + ("all",))
    _add_config_flags(ev)
    ev.set_defaults(func=_cmd_eval)

    corpus = sub.add_parser("corpus", help="corpus n-gram analysis")
    corpus_sub = corpus.add_subparsers(dest="subcommand", required=True)
    count = corpus_sub.add_parser("count", help="multi-pattern n-gram counts")
    count.add_argument("--corpus", required=True)
    count.add_argument("--patterns", nargs="+", required=True,
                       metavar="'w1 w2 [w3]'")
    _add_config_flags(count)
    count.set_defaults(func=_cmd_corpus_count)
    classify = corpus_sub.add_parser("classify",
                                     help="constructional-usage classifier")
    classify.add_argument("--corpus", required=True)
    classify.add_argument("--pattern", required=True, metavar="'w1 w2'")
    _add_config_flags(classify)
    classify.set_defaults(func=_cmd_corpus_classify)

    npn = sub.add_parser("npn", help="NPN dataset generation")
    npn_sub = npn.add_subparsers(dest="subcommand", required=True)
    gen = npn_sub.add_parser("generate")
    gen.add_argument("--endpoint", required=True, help="chat-completion URL")
    gen.add_argument("--model", default="gpt-4-0613")
    gen.add_argument("--nouns", required=True, help="file, one noun per line")
    gen.add_argument("--preps", default="after,upon,by,to")
    gen.add_argument("--retries", type=int, default=3)
    _add_config_flags(gen)
    gen.set_defaults(func=_cmd_npn_generate)

    report = sub.add_parser("report", help="assemble or correlate score tables")
    report_sub = report.add_subparsers(dest="subcommand", required=True)
    assemble = report_sub.add_parser("assemble")
    assemble.add_argument("--scores", nargs="+", required=True,
                          help="scores.jsonl files")
    _add_config_flags(assemble)
    assemble.set_defaults(func=_cmd_report_assemble)
    correlate = report_sub.add_parser("correlate")
    correlate.add_argument("--table", help="table.json (default: bundled reference)")
    correlate.add_argument("--benchmark",
                           help="benchmark JSON (default: bundled reference)")
    _add_config_flags(correlate)
    correlate.set_defaults(func=_cmd_report_correlate)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args, config)
    except TransportError as exc:
        print(f"gateway error: {exc}", file=sys.stderr)
        return EXIT_GATEWAY
    except SchemaError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CxnProbeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
