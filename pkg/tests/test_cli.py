"""Command-line interface tests, run in-process through main(argv)."""

import datetime as dt
import json

import pytest

import paperdesk.cli as cli
import paperdesk.corpus as corpus_mod
from paperdesk.cli import EXIT_FAILURE, EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, data_dir_lock, main
from paperdesk.feeds import FeedUnavailable, FixtureFeed

from conftest import TODAY, entry_batch, write_jsonl


@pytest.fixture(autouse=True)
def _isolate_env(monkeypatch):
    # build_runtime lets DATA_DIR override the config; keep tests hermetic.
    monkeypatch.delenv("DATA_DIR", raising=False)


def write_config(tmp_path, **keys):
    keys.setdefault("data_dir", str(tmp_path / "data"))
    keys.setdefault("embed_dim", 64)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(keys))
    return str(path)


def make_fixture(tmp_path, count=5, days=5):
    entries = entry_batch(count, TODAY - dt.timedelta(days=days - 1), days=days)
    return str(write_jsonl(tmp_path / "feed.jsonl", entries))


# -- usage and config errors -----------------------------------------------------


def test_no_verb_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main([])
    assert excinfo.value.code == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_bad_config_value_names_the_key(tmp_path, capsys):
    config = write_config(tmp_path, embed_dim="large")
    assert main(["--config", config, "rebuild-pool"]) == EXIT_USAGE
    assert "embed_dim" in capsys.readouterr().err


def test_unknown_config_key_is_rejected(tmp_path, capsys):
    config = write_config(tmp_path, embed_dmi=64)
    assert main(["--config", config, "rebuild-pool"]) == EXIT_USAGE
    assert "unknown config key: embed_dmi" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "nope.json"), "rebuild-pool"]) == EXIT_USAGE
    assert "not found" in capsys.readouterr().err


def test_run_fixture_mode_requires_a_fixture_path(tmp_path, capsys):
    config = write_config(tmp_path)
    assert main(["--config", config, "run", "--fixture-mode"]) == EXIT_USAGE
    assert "fixture" in capsys.readouterr().err


# -- ingest ----------------------------------------------------------------------


def test_ingest_reports_counts_and_is_idempotent(tmp_path, capsys):
    config = write_config(tmp_path)
    fixture = make_fixture(tmp_path, count=5, days=5)
    assert main(["--config", config, "ingest", "--fixture", fixture]) == EXIT_OK
    assert "5 new papers" in capsys.readouterr().out
    assert main(["--config", config, "ingest", "--fixture", fixture]) == EXIT_OK
    assert "0 new papers" in capsys.readouterr().out


def test_ingest_selected_dates_then_the_rest(tmp_path, capsys):
    config = write_config(tmp_path)
    fixture = make_fixture(tmp_path, count=5, days=5)
    first_day = (TODAY - dt.timedelta(days=4)).isoformat()
    assert main(["--config", config, "ingest", "--fixture", fixture, "--date", first_day]) == EXIT_OK
    assert "1 new papers" in capsys.readouterr().out
    assert main(["--config", config, "ingest", "--fixture", fixture]) == EXIT_OK
    assert "4 new papers" in capsys.readouterr().out


def test_ingest_without_fixture_is_usage_error(tmp_path, capsys):
    config = write_config(tmp_path)
    assert main(["--config", config, "ingest"]) == EXIT_USAGE
    assert "no fixture file given" in capsys.readouterr().err


def test_ingest_partial_failure_exits_3(tmp_path, capsys, monkeypatch):
    config = write_config(tmp_path)
    fixture = make_fixture(tmp_path, count=4, days=2)  # two papers per day
    bad_day = TODAY

    class PartialFeed(FixtureFeed):
        def fetch_day(self, day):
            if day == bad_day:
                raise FeedUnavailable("fixture feed offline")
            return super().fetch_day(day)

    monkeypatch.setattr(corpus_mod, "RETRY_DELAYS", ())
    monkeypatch.setattr(cli, "FixtureFeed", PartialFeed)
    assert main(["--config", config, "ingest", "--fixture", fixture]) == EXIT_PARTIAL
    captured = capsys.readouterr()
    assert "2 new papers" in captured.out
    assert "ingest stopped after 1/2 days" in captured.err


def test_ingest_failure_before_any_commit_exits_1(tmp_path, capsys, monkeypatch):
    config = write_config(tmp_path)
    fixture = make_fixture(tmp_path, count=2, days=1)

    class DeadFeed(FixtureFeed):
        def fetch_day(self, day):
            raise FeedUnavailable("fixture feed offline")

    monkeypatch.setattr(corpus_mod, "RETRY_DELAYS", ())
    monkeypatch.setattr(cli, "FixtureFeed", DeadFeed)
    assert main(["--config", config, "ingest", "--fixture", fixture]) == EXIT_FAILURE
    captured = capsys.readouterr()
    assert "0 new papers" in captured.out
    assert "ingest stopped after 0/1 days" in captured.err


def test_write_verbs_respect_the_data_dir_lock(tmp_path, capsys):
    config = write_config(tmp_path)
    fixture = make_fixture(tmp_path)
    with data_dir_lock(tmp_path / "data"):
        assert main(["--config", config, "ingest", "--fixture", fixture]) == EXIT_FAILURE
    assert "another process holds the write lock" in capsys.readouterr().err


# -- rebuild-pool ----------------------------------------------------------------


def test_rebuild_pool_is_bit_identical_to_ingest_output(tmp_path, capsys):
    config = write_config(tmp_path)
    fixture = make_fixture(tmp_path, count=5, days=5)
    assert main(["--config", config, "ingest", "--fixture", fixture]) == EXIT_OK
    capsys.readouterr()
    data = tmp_path / "data"
    original_bin = (data / "pool_papers.bin").read_bytes()
    original_ids = (data / "pool_papers.ids").read_bytes()

    (data / "pool_papers.bin").unlink()
    (data / "pool_papers.ids").unlink()
    assert main(["--config", config, "rebuild-pool"]) == EXIT_OK
    assert "rebuilt pools: 5 paper rows, 0 thought rows" in capsys.readouterr().out
    assert (data / "pool_papers.bin").read_bytes() == original_bin
    assert (data / "pool_papers.ids").read_bytes() == original_ids

    # Rebuilding again from intact inputs must be byte-stable.
    assert main(["--config", config, "rebuild-pool"]) == EXIT_OK
    assert (data / "pool_papers.bin").read_bytes() == original_bin


# -- bench verbs -----------------------------------------------------------------


def test_bench_retrieval_verb_prints_report_and_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    argv = [
        "bench", "retrieval",
        "--sizes", "30,60",
        "--trials", "1",
        "--naive-trials", "1",
        "--out", str(out),
    ]
    assert main(argv) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["scenario"] == "retrieval_scaling"
    assert report["corpus_sizes"] == [30, 60]
    assert (out / "retrieval_scaling.csv").exists()
    assert (out / "retrieval_scaling.png").exists()


def test_bench_retrieval_rejects_bad_sizes(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["bench", "retrieval", "--sizes", "abc"])
    assert excinfo.value.code == EXIT_USAGE
    assert "comma-separated integers" in capsys.readouterr().err


def test_bench_deploy_single_config(capsys):
    argv = ["bench", "deploy", "--toggles", "precompute,cache", "--latency", "0"]
    assert main(argv) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["label"] == "+precompute +cache -parallel_engine"
    assert report["provider_calls"] == 15


def test_bench_deploy_rejects_unknown_toggle(capsys):
    assert main(["bench", "deploy", "--toggles", "warp"]) == EXIT_USAGE
    assert "unknown toggle 'warp'" in capsys.readouterr().err
