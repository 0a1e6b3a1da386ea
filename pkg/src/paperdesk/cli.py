"""Operator entry points: serve the API, ingest papers, rebuild pools, bench.

Anything that must agree between verbs (data_dir, embed_dim) lives in the JSON
config file rather than per-verb flags. Verbs that write to the data directory
take an advisory lock so two writers cannot interleave.

Exit codes: 0 success, 1 runtime failure, 2 bad usage or config (message names
the offending key), 3 partial ingest (some days committed, a later one failed).
"""

from __future__ import annotations

import argparse
import contextlib
import datetime as dt
import fcntl
import json
import logging
import shutil
import sys
from pathlib import Path

from .config import AppConfig, ConfigError, load_config
from .corpus import CorpusStore
from .errors import ValidationError
from .feeds import FeedUnavailable, FixtureFeed

logger = logging.getLogger(__name__)

LOCK_FILE = ".lock"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_PARTIAL = 3


@contextlib.contextmanager
def data_dir_lock(data_dir: Path):
    """Advisory exclusive lock; fails fast if another writer holds it."""
    data_dir.mkdir(parents=True, exist_ok=True)
    lock_path = data_dir / LOCK_FILE
    with lock_path.open("w") as fh:
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            raise RuntimeError(f"another process holds the write lock on {data_dir}")
        yield


def _load_config(args: argparse.Namespace, **overrides) -> AppConfig:
    merged = {k: v for k, v in overrides.items() if v is not None}
    return load_config(getattr(args, "config", None), merged)


# -- verbs ---------------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    import uvicorn

    from .api import build_app
    from .engine import build_runtime

    config = _load_config(args, port=args.port, provider=args.provider, fixture=args.fixture)
    if args.fixture_mode and not config.fixture:
        raise ConfigError("fixture: --fixture-mode needs a fixture path (flag --fixture or config key)")
    with data_dir_lock(Path(config.data_dir)):
        runtime = build_runtime(config)
        runtime.engine.start(scheduler=True)
        static_dir = Path(args.static) if args.static else None
        app = build_app(runtime, static_dir=static_dir)
        print(f"serving on http://{args.host}:{config.port} (data_dir={config.data_dir})")
        try:
            uvicorn.run(app, host=args.host, port=config.port, log_level="info")
        finally:
            runtime.engine.stop()
    return EXIT_OK


def _fixture_dates(feed: FixtureFeed) -> list[dt.date]:
    """Distinct valid published dates present in the fixture, ascending."""
    days = set()
    for entry in feed.entries():
        published = entry.get("published")
        if not isinstance(published, str):
            continue
        try:
            days.add(dt.date.fromisoformat(published))
        except ValueError:
            continue
    return sorted(days)


def cmd_ingest(args: argparse.Namespace) -> int:
    from .engine import build_runtime

    config = _load_config(args, fixture=args.fixture)
    if not config.fixture:
        print("error: fixture: no fixture file given (flag --fixture or config key)", file=sys.stderr)
        return EXIT_USAGE
    feed = FixtureFeed(config.fixture)
    explicit = bool(args.date)
    if explicit:
        dates = sorted(dt.date.fromisoformat(d) for d in args.date)
    else:
        dates = _fixture_dates(feed)
    with data_dir_lock(Path(config.data_dir)):
        runtime = build_runtime(config, feed=feed)
        if not explicit:
            # Syncing from the fixture: days at or before the corpus high-water
            # mark are already committed (same-day re-ingest skips duplicates),
            # so drop the strictly older ones instead of tripping the
            # backdating guard. Explicit --date keeps the strict error.
            as_of = runtime.corpus_store.snapshot().as_of
            if as_of is not None:
                dates = [d for d in dates if d >= as_of]
        if not dates:
            print("0 new papers")
            return EXIT_OK
        total = 0
        committed_days = 0
        try:
            for date in dates:
                summary = runtime.engine.run_daily_update(date, feed)
                total += summary["new_papers"]
                committed_days += 1
        except (FeedUnavailable, ValidationError, OSError) as exc:
            print(f"{total} new papers", flush=True)
            print(f"error: ingest stopped after {committed_days}/{len(dates)} days: {exc}", file=sys.stderr)
            return EXIT_PARTIAL if committed_days else EXIT_FAILURE
        print(f"{total} new papers")
    return EXIT_OK


def cmd_rebuild_pool(args: argparse.Namespace) -> int:
    from .embedding import HashedNgramEmbedder
    from .engine import paper_embedding_text
    from .featurepool import FeaturePool, day_epoch
    from .thoughts import ThoughtStore

    config = _load_config(args)
    data_dir = Path(config.data_dir)
    with data_dir_lock(data_dir):
        embedder = HashedNgramEmbedder(config.embed_dim)
        staging = data_dir / "rebuild.tmp"
        if staging.exists():
            shutil.rmtree(staging)
        staging.mkdir(parents=True)
        corpus = CorpusStore(data_dir).snapshot()
        paper_pool = FeaturePool(config.embed_dim, "papers", staging)
        if corpus.records:
            paper_pool.append(
                [r.id for r in corpus.records],
                [embedder.embed(paper_embedding_text(r)) for r in corpus.records],
                [day_epoch(r.published) for r in corpus.records],
            )
        # ThoughtStore heals an empty pool from its log, re-embedding every row.
        thought_pool = FeaturePool(config.embed_dim, "thoughts", staging)
        ThoughtStore(thought_pool, embedder, data_dir)
        for name in ("pool_papers", "pool_thoughts"):
            for suffix in (".bin", ".ids"):
                (staging / (name + suffix)).replace(data_dir / (name + suffix))
        shutil.rmtree(staging)
        print(f"rebuilt pools: {paper_pool.rowcount} paper rows, {thought_pool.rowcount} thought rows")
    return EXIT_OK


def _parse_sizes(text: str) -> list[int]:
    try:
        sizes = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"sizes must be comma-separated integers, got {text!r}")
    if not sizes or any(s <= 0 for s in sizes):
        raise argparse.ArgumentTypeError(f"sizes must be positive integers, got {text!r}")
    return sizes


def cmd_bench_retrieval(args: argparse.Namespace) -> int:
    from .bench import bench_retrieval_scaling

    report = bench_retrieval_scaling(
        sizes=args.sizes, trials=args.trials, naive_trials=args.naive_trials, out_dir=args.out
    )
    print(json.dumps(report, indent=2, default=str))
    return EXIT_OK


def cmd_bench_deploy(args: argparse.Namespace) -> int:
    from .bench import DeployToggles, bench_deployment, run_deployment_comparison

    if args.toggles is None:
        report = run_deployment_comparison(simulated_llm_latency=args.latency, out_dir=args.out)
    else:
        names = {"precompute", "cache", "parallel_engine"}
        if args.toggles == "all":
            enabled = set(names)
        elif args.toggles == "none":
            enabled = set()
        else:
            enabled = {part.strip() for part in args.toggles.split(",") if part.strip()}
            unknown = enabled - names
            if unknown:
                print(f"error: toggles: unknown toggle {sorted(unknown)[0]!r}", file=sys.stderr)
                return EXIT_USAGE
        report = bench_deployment(
            DeployToggles(**{name: name in enabled for name in names}),
            simulated_llm_latency=args.latency,
        )
    print(json.dumps(report, indent=2, default=str))
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paperdesk", description=__doc__)
    parser.add_argument("--config", help="path to JSON config file")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="serve the JSON API")
    p_run.add_argument("--host", default="127.0.0.1")
    p_run.add_argument("--port", type=int, default=None, help="override config port")
    p_run.add_argument("--provider", choices=["mock", "live"], default=None)
    p_run.add_argument("--fixture", default=None, help="serve papers from a fixture JSONL feed")
    p_run.add_argument(
        "--fixture-mode",
        action="store_true",
        help="use the fixture feed from the config file instead of the live feed",
    )
    p_run.add_argument("--static", default=None, help="directory of built UI assets to mount at /ui")
    p_run.set_defaults(func=cmd_run)

    p_ingest = sub.add_parser("ingest", help="fetch, embed and commit papers day by day")
    p_ingest.add_argument("--fixture", default=None, help="fixture JSONL feed to ingest from")
    p_ingest.add_argument(
        "--date", action="append", default=None, help="ISO day to ingest (repeatable; default: all days in fixture)"
    )
    p_ingest.set_defaults(func=cmd_ingest)

    p_rebuild = sub.add_parser("rebuild-pool", help="rebuild feature pools from the corpus and thought log")
    p_rebuild.set_defaults(func=cmd_rebuild_pool)

    p_bench = sub.add_parser("bench", help="run performance benchmarks")
    bench_sub = p_bench.add_subparsers(dest="scenario", required=True)

    p_ret = bench_sub.add_parser("retrieval", help="retrieval latency vs corpus size")
    p_ret.add_argument("--sizes", type=_parse_sizes, default=[1000, 2000, 4000, 8000])
    p_ret.add_argument("--trials", type=int, default=5)
    p_ret.add_argument("--naive-trials", type=int, default=1)
    p_ret.add_argument("--out", default=None, help="directory for CSV and figure output")
    p_ret.set_defaults(func=cmd_bench_retrieval)

    p_dep = bench_sub.add_parser("deploy", help="scripted session with optimizations toggled")
    p_dep.add_argument(
        "--toggles",
        default=None,
        help="comma list of {precompute,cache,parallel_engine}, or all/none; default: run the on-vs-off comparison",
    )
    p_dep.add_argument("--latency", type=float, default=1.0, help="simulated provider latency in seconds")
    p_dep.add_argument("--out", default=None, help="directory for CSV and figure output")
    p_dep.set_defaults(func=cmd_bench_deploy)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except KeyboardInterrupt:
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
