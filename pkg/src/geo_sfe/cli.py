"""``geo-sfe`` command line: extract, optimize, check, evaluate, ablate.

Exit codes: 0 success, 1 preservation check failed, 2 file not found,
3 parse failure, 4 similarity provider failure, 5 no mapping available and
unit counts differ.

Settings come from a JSON config file (``--config`` or ``$GEO_SFE_CONFIG``)
and are overridden by flags. Recognised keys::

    {
      "arch_weights": "STS=0.4,IR=0.3,ISG=0.3",   # or a {"STS": ...} object
      "stats": "path/to/stats.json",
      "profiles": "path/to/profiles.json",
      "provider": {"kind": "lexical"}  |  {"kind": "external", "endpoint": "...", "model": "...",
                                           "timeout": 10, "retries": 3, "fallback": true},
      "thresholds": {"sentence": 0.95, "paragraph": 0.70, "document": 0.15},
      "optimizer": {"theta_macro": 0.1, "max_passes": 20, ...},
      "targets": {"sf_base": {...}, "sf_min": {...}, "sf_max": {...}, "paragraph_length": [225, 150, 300]},
      "keywords": ["..."],
      "format": "json",
      "jobs": 1
    }
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import __version__
from .citation import compute_targets, load_profiles, parse_arch_weights, validate_alpha
from .document import DocumentTree, parse, serialize
from .engine_sim import PARADIGMS, EngineSimulator, Query, ablate, compare, score
from .errors import BadAlpha, GeoSfeError, InputTooLarge, MalformedInput, MappingIncomplete, ProviderError
from .features import CorpusStats, extract_all, normalize
from .optimizer import OptimizationConfig, Optimizer
from .semantic import Thresholds, check_preservation, make_provider

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_NOT_FOUND = 2
EXIT_PARSE = 3
EXIT_PROVIDER = 4
EXIT_NO_MAPPING = 5

SIMULATION_CAVEAT = (
    "Simulated deltas from a deterministic desk-scale engine model; "
    "these are not live generative-engine measurements and are not comparable to published live results."
)


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# configuration


@dataclasses.dataclass(frozen=True)
class RunConfig:
    alpha: Mapping[str, float] | None = None
    stats_path: str | None = None
    profiles_path: str | None = None
    provider: Mapping[str, Any] = dataclasses.field(default_factory=lambda: {"kind": "lexical"})
    thresholds: Mapping[str, float] = dataclasses.field(default_factory=dict)
    optimizer: Mapping[str, Any] = dataclasses.field(default_factory=dict)
    targets: Mapping[str, Any] = dataclasses.field(default_factory=dict)
    keywords: tuple[str, ...] | None = None
    format: str = "json"
    jobs: int = 1

    def load_stats(self) -> CorpusStats | None:
        if self.stats_path is None:
            return None
        return CorpusStats.load(_existing(self.stats_path))

    def load_profiles(self):
        return load_profiles(_existing(self.profiles_path)) if self.profiles_path else None

    def optimization_config(self, stats: CorpusStats | None) -> OptimizationConfig:
        targets = compute_targets(self.alpha, self.load_profiles(), stats, overrides=self.targets or None)
        opts = dict(self.optimizer)
        if "skip_levels" in opts:
            opts["skip_levels"] = frozenset(opts["skip_levels"])
        for key in ("convert_weights", "importance_weights"):
            if key in opts:
                opts[key] = tuple(opts[key])
        thresholds = Thresholds(**self.thresholds) if self.thresholds else Thresholds()
        keywords = tuple(self.keywords) if self.keywords is not None else None
        return OptimizationConfig(targets=targets, thresholds=thresholds, keywords=keywords, **opts)


def _existing(path: str | os.PathLike) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(EXIT_NOT_FOUND, f"file not found: {p}")
    return p


def load_run_config(args: argparse.Namespace) -> RunConfig:
    data: dict[str, Any] = {}
    path = args.config or os.environ.get("GEO_SFE_CONFIG")
    if path:
        try:
            data = json.loads(_existing(path).read_text())
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_PARSE, f"config {path}: {exc}") from exc
    alpha = data.get("arch_weights", data.get("alpha"))
    if args.arch_weights is not None:
        alpha = args.arch_weights
    if isinstance(alpha, str):
        alpha = parse_arch_weights(alpha)
    elif alpha is not None:
        alpha = validate_alpha(alpha)
    provider = dict(data.get("provider") or {"kind": "lexical"})
    if isinstance(data.get("provider"), str):
        provider = {"kind": data["provider"]}
    if args.provider is not None:
        provider["kind"] = args.provider
    if provider.get("kind") == "external" and "endpoint" not in provider:
        endpoint = os.environ.get("GEO_SFE_PROVIDER_URL")
        if not endpoint:
            raise CliError(EXIT_PROVIDER, "external provider selected but no endpoint configured")
        provider["endpoint"] = endpoint
    cfg = RunConfig(
        alpha=alpha,
        stats_path=args.stats if args.stats is not None else data.get("stats"),
        profiles_path=data.get("profiles"),
        provider=provider,
        thresholds=data.get("thresholds") or {},
        optimizer=data.get("optimizer") or {},
        targets=data.get("targets") or {},
        keywords=tuple(data["keywords"]) if data.get("keywords") is not None else None,
        format=args.format or data.get("format", "json"),
        jobs=args.jobs if args.jobs is not None else int(data.get("jobs", 1)),
    )
    if cfg.format not in ("json", "text"):
        raise CliError(EXIT_PARSE, f"unknown format {cfg.format!r}")
    return cfg


# ---------------------------------------------------------------------------
# input helpers


def read_tree(path: str | os.PathLike, source_id: str | None = None) -> DocumentTree:
    p = _existing(path)
    try:
        raw = p.read_bytes()
        tree = parse(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise CliError(EXIT_PARSE, f"{p}: not valid UTF-8 ({exc})") from exc
    except (MalformedInput, InputTooLarge) as exc:
        raise CliError(EXIT_PARSE, f"{p}: {exc}") from exc
    return dataclasses.replace(tree, source_id=source_id or p.stem)


def read_corpus(directory: str | os.PathLike) -> dict[str, DocumentTree]:
    d = _existing(directory)
    if not d.is_dir():
        raise CliError(EXIT_NOT_FOUND, f"not a directory: {d}")
    files = sorted(d.glob("*.md"))
    if not files:
        raise CliError(EXIT_NOT_FOUND, f"no .md files in {d}")
    return {f.stem: read_tree(f, f.stem) for f in files}


def read_queries(path: str | os.PathLike) -> list[Query]:
    p = _existing(path)
    try:
        data = json.loads(p.read_text())
        return [Query.from_dict(q) for q in data]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_PARSE, f"{p}: bad queries file ({exc})") from exc


def emit(payload: Any, fmt: str, text: str | None = None, out=None) -> None:
    out = out or sys.stdout
    if fmt == "json" or text is None:
        out.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        out.write(text.rstrip("\n") + "\n")


def _fmt(x: float | None, digits: int = 4) -> str:
    if x is None:
        return "n/a"
    return f"{x:.{digits}f}"


# ---------------------------------------------------------------------------
# optimization workers (module level so they pickle)

_WORKER: dict[str, Any] = {}


def _init_worker(cfg: RunConfig) -> None:
    stats = cfg.load_stats()
    _WORKER["optimizer"] = _make_optimizer(cfg, stats)


def _make_optimizer(cfg: RunConfig, stats: CorpusStats | None) -> Optimizer:
    from .data import reference_stats

    stats = stats if stats is not None else reference_stats()
    provider = make_provider(cfg.provider, stats.idf)
    return Optimizer(cfg.optimization_config(stats), stats, provider, cfg.load_profiles())


def _optimize_text(item: tuple[str, str]) -> tuple[str, str, dict, str]:
    source_id, text = item
    tree = dataclasses.replace(parse(text), source_id=source_id)
    out, log = _WORKER["optimizer"].optimize(tree)
    return serialize(out), log.to_jsonl(), log.summary(), log.mapping_json()


def optimize_many(items: Sequence[tuple[str, str]], cfg: RunConfig) -> list[tuple[str, str, dict, str]]:
    """Optimize documents in input order; ``cfg.jobs`` > 1 uses worker processes."""
    if cfg.jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs, initializer=_init_worker, initargs=(cfg,)) as pool:
            return list(pool.map(_optimize_text, items))
    _init_worker(cfg)
    return [_optimize_text(it) for it in items]


# ---------------------------------------------------------------------------
# commands


def cmd_extract(args, cfg: RunConfig) -> int:
    tree = read_tree(args.input)
    stats = cfg.load_stats()
    provider = make_provider(cfg.provider, stats.idf if stats else None)
    raw = extract_all(tree, cfg.keywords, stats=stats, provider=provider)
    report = {
        "raw": raw.to_dict(),
        "normalized": normalize(raw, stats).to_dict() if stats is not None else None,
        "level_distribution": {str(k): v for k, v in raw.b_h.items()},
        "diagnostics": [d.to_dict() if hasattr(d, "to_dict") else str(d) for d in tree.diagnostics],
    }
    lines = [f"{'feature':<14} {'raw':>12} {'normalized':>12}"]
    for k, v in report["raw"].items():
        n = report["normalized"][k] if report["normalized"] else None
        lines.append(f"{k:<14} {v:>12.6f} {_fmt(n, 6):>12}")
    lines += [f"diagnostic: {d}" for d in report["diagnostics"]]
    emit(report, cfg.format, "\n".join(lines))
    return EXIT_OK


def _sidecars(output: Path) -> tuple[Path, Path]:
    return output.with_name(output.name + ".log.jsonl"), output.with_name(output.name + ".map.json")


def cmd_optimize(args, cfg: RunConfig) -> int:
    src = _existing(args.input)
    tree = read_tree(src)
    output = Path(args.output) if args.output else src.with_name(src.stem + ".optimized.md")
    [(text, log_lines, summary, mapping)] = optimize_many([(tree.source_id, serialize(tree))], cfg)
    output.write_text(text)
    log_path, map_path = _sidecars(output)
    log_path.write_text(log_lines)
    map_path.write_text(mapping)
    summary = {**summary, "output": str(output), "log": str(log_path), "mapping": str(map_path)}
    lines = [
        f"final_mode  {summary['final_mode']}",
        f"P_before    {summary['P_before']:.6f}",
        f"P_after     {summary['P_after']:.6f}",
        f"edits       {summary['edits_applied']} applied, {summary['edits_rejected']} rejected",
        f"verdict     {'pass' if summary['verdict']['overall'] else 'FAIL'}",
        f"output      {output}",
    ]
    emit(summary, cfg.format, "\n".join(lines))
    return EXIT_OK


def cmd_check(args, cfg: RunConfig) -> int:
    original = read_tree(args.original)
    transformed = read_tree(args.transformed)
    mapping = None
    map_path = Path(args.mapping) if args.mapping else _sidecars(Path(args.transformed))[1]
    if args.mapping:
        _existing(map_path)
    if map_path.exists():
        try:
            mapping = [tuple(m) for m in json.loads(map_path.read_text())["mapping"]]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CliError(EXIT_PARSE, f"{map_path}: bad mapping file ({exc})") from exc
    from .data import reference_stats

    # same similarity setup as optimize, so its outputs re-check identically
    stats = cfg.load_stats() or reference_stats()
    provider = make_provider(cfg.provider, stats.idf)
    thresholds = Thresholds(**cfg.thresholds) if cfg.thresholds else Thresholds()
    try:
        verdict = check_preservation(original, transformed, mapping, provider=provider, thresholds=thresholds)
    except MappingIncomplete as exc:
        raise CliError(EXIT_NO_MAPPING, str(exc)) from exc
    report = verdict.to_dict()
    lines = [
        f"sentence   min sim {verdict.sentence_min_sim:.4f}  {'pass' if 'sentence' in verdict.passed_levels else 'FAIL'}",
        f"paragraph  chain   {verdict.paragraph_chain_mean:.4f}  {'pass' if 'paragraph' in verdict.passed_levels else 'FAIL'}",
        f"document   JS      {verdict.js_divergence:.4f}  {'pass' if 'document' in verdict.passed_levels else 'FAIL'}",
        f"overall    {'pass' if verdict.overall else 'FAIL'}",
    ]
    emit(report, cfg.format, "\n".join(lines))
    return EXIT_OK if verdict.overall else EXIT_CHECK_FAILED


def _paradigms(args) -> tuple[str, ...]:
    if not args.paradigm:
        return PARADIGMS
    bad = [p for p in args.paradigm if p not in PARADIGMS]
    if bad:
        raise CliError(EXIT_PARSE, f"unknown paradigm(s) {bad}")
    return tuple(args.paradigm)


def _comparison_output(rows, cfg: RunConfig) -> None:
    payload = {"paradigms": [r.to_dict() for r in rows], "caveat": SIMULATION_CAVEAT}
    lines = [f"{'paradigm':<9} {'VS base':>9} {'VS opt':>9} {'VS delta':>9} {'change':>8} {'CR base':>8} {'CR opt':>8}"]
    for r in rows:
        change = f"{100 * r.vs_change:+.1f}%" if r.vs_change is not None else "n/a"
        lines.append(
            f"{r.paradigm:<9} {r.vs_baseline:>9.4f} {r.vs_optimized:>9.4f} {r.vs_delta:>+9.4f} {change:>8} "
            f"{r.cr_baseline:>8.4f} {r.cr_optimized:>8.4f}"
        )
    lines.append(f"note: {SIMULATION_CAVEAT}")
    emit(payload, cfg.format, "\n".join(lines))


def cmd_evaluate(args, cfg: RunConfig) -> int:
    queries = read_queries(args.queries)
    paradigms = _paradigms(args)
    stats = cfg.load_stats()
    profiles = cfg.load_profiles()
    if args.compare:
        base = read_corpus(args.compare[0])
        opt = read_corpus(args.compare[1])
        if set(base) != set(opt):
            raise CliError(EXIT_NOT_FOUND, "baseline and optimized directories hold different file names")
        _comparison_output(compare(base, opt, queries, paradigms, stats=stats, profiles=profiles), cfg)
        return EXIT_OK
    if args.corpus is None:
        raise CliError(EXIT_NOT_FOUND, "evaluate needs a corpus directory or --compare BASE OPT")
    corpus = read_corpus(args.corpus)
    if args.optimize:
        results = optimize_many([(k, serialize(t)) for k, t in corpus.items()], cfg)
        opt = {k: dataclasses.replace(parse(r[0]), source_id=k) for k, r in zip(corpus, results)}
        _comparison_output(compare(corpus, opt, queries, paradigms, stats=stats, profiles=profiles), cfg)
        return EXIT_OK
    sim = EngineSimulator.for_corpus(list(corpus.values()), stats, profiles)
    payload, lines = {}, [f"{'paradigm':<9} {'CR':>8} {'VS':>8} {'depth':>8} {'first':>8}"]
    for p in paradigms:
        report = score(sim.simulate(corpus, queries, p), corpus)
        payload[p] = report.to_dict()
        lines.append(f"{p:<9} {report.citation_rate:>8.4f} {report.visibility:>8.4f} "
                     f"{report.citation_depth:>8.4f} {_fmt(report.first_position):>8}")
    emit(payload, cfg.format, "\n".join(lines))
    return EXIT_OK


def cmd_ablate(args, cfg: RunConfig) -> int:
    queries = read_queries(args.queries)
    corpus = read_corpus(args.corpus)
    stats = cfg.load_stats()
    config = _make_optimizer(cfg, stats).config

    def optimize_fn(tree: DocumentTree, oc: OptimizationConfig) -> DocumentTree:
        return cache[oc.skip_levels][tree.source_id]

    # every configuration runs through the (possibly parallel) batch path
    cache: dict[frozenset, dict[str, DocumentTree]] = {}
    from .engine_sim import ABLATION_CONFIGS

    items = [(k, serialize(t)) for k, t in corpus.items()]
    for _, skip in ABLATION_CONFIGS:
        skip_all = frozenset(config.skip_levels) | skip
        sub = dataclasses.replace(cfg, optimizer={**cfg.optimizer, "skip_levels": sorted(skip_all)})
        results = optimize_many(items, sub)
        cache[skip_all] = {k: dataclasses.replace(parse(r[0]), source_id=k) for k, r in zip(corpus, results)}
    table = ablate(corpus, queries, config, stats=stats, profiles=cfg.load_profiles(),
                   paradigms=_paradigms(args), optimize_fn=optimize_fn)
    payload = {**table.to_dict(), "caveat": SIMULATION_CAVEAT}
    paradigms = list(table.rows[0].vs)
    lines = [f"{'configuration':<14} " + " ".join(f"{'VS ' + p:>9}" for p in paradigms)
             + f" {'mean VS':>9} {'mean CR':>9}"]
    for r in table.rows:
        mean_cr = math.fsum(r.cr.values()) / len(r.cr)
        lines.append(f"{r.name:<14} " + " ".join(f"{r.vs[p]:>9.4f}" for p in paradigms)
                     + f" {r.mean_vs:>9.4f} {mean_cr:>9.4f}")
    for level, c in table.contributions.items():
        lines.append(f"contribution {level:<6} {'n/a' if c is None else f'{100 * c:.1f}%'}")
    lines.append(f"note: {SIMULATION_CAVEAT}")
    emit(payload, cfg.format, "\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON config file (default: $GEO_SFE_CONFIG)")
    shared.add_argument("--stats", help="reference corpus statistics JSON")
    shared.add_argument("--arch-weights", help="architecture mix, e.g. STS=0.4,IR=0.3,ISG=0.3")
    shared.add_argument("--provider", choices=("lexical", "external"), help="similarity provider")
    shared.add_argument("--format", choices=("json", "text"), help="report format (default json)")
    shared.add_argument("--jobs", type=int, help="worker processes for corpus runs")

    parser = argparse.ArgumentParser(prog="geo-sfe", description="Structural feature engineering for Markdown.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", parents=[shared], help="print the structural feature vector")
    p.add_argument("input")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("optimize", parents=[shared], help="optimize one document")
    p.add_argument("input")
    p.add_argument("-o", "--output", help="output path (default: <input>.optimized.md)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("check", parents=[shared], help="semantic preservation check")
    p.add_argument("original")
    p.add_argument("transformed")
    p.add_argument("--mapping", help="unit mapping JSON (default: <transformed>.map.json if present)")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("evaluate", parents=[shared], help="simulated visibility report")
    p.add_argument("corpus", nargs="?", help="directory of .md files")
    p.add_argument("--queries", required=True, help="JSON array of {id, text}")
    p.add_argument("--paradigm", action="append", help="restrict to STS, IR or ISG (repeatable)")
    p.add_argument("--optimize", action="store_true", help="optimize the corpus and report deltas")
    p.add_argument("--compare", nargs=2, metavar=("BASELINE_DIR", "OPTIMIZED_DIR"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", parents=[shared], help="per-level contribution table")
    p.add_argument("corpus")
    p.add_argument("--queries", required=True)
    p.add_argument("--paradigm", action="append")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_run_config(args)
        if cfg.jobs < 1:
            raise CliError(EXIT_PARSE, "--jobs must be at least 1")
        return args.func(args, cfg)
    except CliError as exc:
        print(f"geo-sfe: {exc}", file=sys.stderr)
        return exc.code
    except ProviderError as exc:
        print(f"geo-sfe: similarity provider failed: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except BadAlpha as exc:
        print(f"geo-sfe: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FileNotFoundError as exc:
        print(f"geo-sfe: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_NOT_FOUND
    except GeoSfeError as exc:
        print(f"geo-sfe: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
