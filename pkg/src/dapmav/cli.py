"""Command-line interface: ``dapmav <stage> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .config import load_config
from .errors import DapmavError
from .pipeline import CACHE_ENV, STAGES, run_all, run_stage

EPILOG = f"""\
exit codes: 0 ok, 2 configuration error, 3 data error, 4 stage-dependency or stale-input error.

Topic landscapes use classical multidimensional scaling by default
(layout.method = "mds"); layout.method = "sne" selects a t-SNE style
neighbour embedding instead. UMAP is not used: MDS is deterministic and
keeps global structure, the embedding favours local neighbourhoods.

Pushshift fetches and the per-stage timing log (timings.ndjson) live under
${CACHE_ENV} (default ~/.cache/dapmav).
"""


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", type=Path, help="TOML config file")
    p.add_argument("-o", "--output", type=Path, help="output directory (overrides paths.output_dir)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config value; repeatable, values are TOML literals")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dapmav", description="Topic, position and sentiment analysis of forum discourse.",
        epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "acquire": "load dumps or fetch from a Pushshift-compatible API, filter and sample",
        "preprocess": "tokenize, remove stopwords, prune rare words and short documents",
        "model": "fit the nested block-model topic hierarchy and score document sentiment",
        "analyse": "positional densities, topic co-occurrence, emotional arc and segments",
        "visualise": "layout, word clouds, landscape, stacked densities and arc figures",
    }
    for stage in STAGES:
        p = sub.add_parser(stage, help=helps[stage], epilog=EPILOG,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        _common(p)
        p.add_argument("--force", action="store_true", help="run even if upstream artifacts are stale")
    p = sub.add_parser("run-all", help="run every stage in order", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p)
    p.add_argument("--force", action="store_true")
    p = sub.add_parser("stats", help="print corpus statistics as JSON")
    _common(p)
    p.add_argument("input", nargs="*", type=Path,
                   help="raw NDJSON dumps to filter and preprocess (default: the bundle's corpus)")
    p = sub.add_parser("fixture", help="write the synthetic demo corpus and its config")
    p.add_argument("directory", type=Path)
    p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def _stats(args) -> dict:
    cfg = load_config(args.config, args.overrides, args.output, require_lexicon=False)
    from .ingest import corpus_stats, filter_posts, load_ndjson
    from .preprocess import load_stoplist, preprocess_posts, read_documents

    if args.input:
        posts, seen = [], set()
        for path in args.input:
            for p in load_ndjson(path):
                if p.id not in seen:
                    seen.add(p.id)
                    posts.append(p)
        posts = filter_posts(posts, cfg.criteria())
        pp = cfg["preprocess"]
        corpus, vocab = preprocess_posts(posts, load_stoplist(cfg.path("stoplist")),
                                         pp["min_tokens"], pp["min_count"],
                                         include_titles=pp["include_titles"],
                                         merge_replies=pp["merge_replies"])
    else:
        docs = cfg.output_dir / "documents.ndjson"
        if not docs.exists():
            from .errors import StageDependencyError
            raise StageDependencyError(f"{docs} not found; run preprocess first or pass input files")
        corpus = read_documents(docs)
        vocab = None
    stats = asdict(corpus_stats(corpus))
    if vocab is not None:
        stats["vocabulary_size"] = len(vocab)
    return stats


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fixture":
            from .fixture import write_fixture
            print(write_fixture(args.directory))
            return 0
        if args.command == "stats":
            print(json.dumps(_stats(args), indent=1, sort_keys=True))
            return 0
        cfg = load_config(args.config, args.overrides, args.output)
        if args.command == "run-all":
            run_all(cfg, args.force)
            print(f"bundle written to {cfg.output_dir}")
        else:
            result = run_stage(cfg, args.command, args.force)
            print(json.dumps(result, indent=1, sort_keys=True, default=str))
        return 0
    except DapmavError as exc:
        print(f"dapmav: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
