"""Command-line interface: full pipeline round trip, exit codes, config file."""
import json

import numpy as np
import pytest

from mild.alerting import AlertEvent
from mild.cli import main, read_config
from mild.synthgen import GeneratedBenchmark

pytestmark = pytest.mark.filterwarnings(
    "ignore::UserWarning",            # small fixtures trip benign fallbacks
    "ignore:Mean of empty",
)


@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "bench"
    rc = main(["generate", "--out", str(out), "--minutes", "6000",
               "--episodes", "5", "--seed", "11"])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def lr_bundle(bench_dir, tmp_path_factory):
    path = tmp_path_factory.mktemp("cli-model") / "lr.json"
    rc = main(["train", "--data", str(bench_dir), "--out", str(path),
               "--method", "lr", "--horizon", "120"])
    assert rc == 0
    return path


@pytest.fixture(scope="module")
def alerts_file(bench_dir, lr_bundle, tmp_path_factory):
    path = tmp_path_factory.mktemp("cli-alerts") / "alerts.jsonl"
    rc = main(["stream", "--model", str(lr_bundle), "--data", str(bench_dir),
               "--out", str(path)])
    assert rc == 0
    return path


# ---------------------------------------------------------------------------
# pipeline round trip

def test_generate_writes_benchmark(bench_dir):
    bench = GeneratedBenchmark.load(bench_dir)
    assert len(bench.frames) == 6000
    failures = [e for e in bench.episodes if e.fail_t]
    assert len(failures) == 5


def test_generate_deterministic_files(bench_dir, tmp_path):
    rc = main(["generate", "--out", str(tmp_path / "again"), "--minutes", "6000",
               "--episodes", "5", "--seed", "11"])
    assert rc == 0
    for name in ("kpis.csv", "episodes.json"):
        assert (tmp_path / "again" / name).read_bytes() == \
            (bench_dir / name).read_bytes()


def test_train_embeds_thresholds_and_metadata(lr_bundle):
    payload = json.loads(lr_bundle.read_text())
    assert payload["kind"] == "lr"
    assert len(payload["thresholds"]) == 3
    assert payload["metadata"]["method"] == "lr"
    assert payload["metadata"]["horizon"] == 120


def test_stream_produces_alert_log(alerts_file):
    lines = [json.loads(l) for l in alerts_file.read_text().splitlines()]
    assert lines, "expected at least one alert on a benchmark with 5 failures"
    for d in lines:
        ev = AlertEvent.from_dict(d)
        assert ev.horizon == 120
        assert 0 <= ev.intent < 3
        assert ev.t_end >= ev.t


def test_stream_tau_override(bench_dir, lr_bundle, tmp_path):
    out = tmp_path / "alerts-low.jsonl"
    rc = main(["stream", "--model", str(lr_bundle), "--data", str(bench_dir),
               "--out", str(out), "--tau", "0.05"])
    assert rc == 0
    n_low = len(out.read_text().splitlines())
    out_hi = tmp_path / "alerts-high.jsonl"
    rc = main(["stream", "--model", str(lr_bundle), "--data", str(bench_dir),
               "--out", str(out_hi), "--tau", "0.95,0.95,0.95"])
    assert rc == 0
    n_high = len(out_hi.read_text().splitlines())
    assert n_low >= n_high


def test_explain_alert(bench_dir, lr_bundle, alerts_file, tmp_path, capsys):
    out = tmp_path / "att.csv"
    rc = main(["explain", "--model", str(lr_bundle), "--data", str(bench_dir),
               "--alerts", str(alerts_file), "--index", "0", "--mode", "grouped",
               "--out", str(out)])
    assert rc == 0
    text = capsys.readouterr().out
    assert "base risk" in text
    lines = out.read_text().splitlines()
    assert lines[0] == "player,contribution"
    assert len(lines) == 1 + 8 + 2  # eight KPI groups plus the footer pair


def test_explain_bad_index(bench_dir, lr_bundle, alerts_file):
    rc = main(["explain", "--model", str(lr_bundle), "--data", str(bench_dir),
               "--alerts", str(alerts_file), "--index", "9999"])
    assert rc == 2


def test_ttf_fuses_two_horizons(tmp_path):
    def event(t, t_end, horizon):
        return AlertEvent(t=t, intent=0, smoothed_risk=0.9, gate=(1.0, 0.0, 0.0),
                          root_cause=0, horizon=horizon, t_end=t_end)

    log_a = tmp_path / "h120.jsonl"
    log_b = tmp_path / "h60.jsonl"
    log_a.write_text(json.dumps(event(100, 200, 120).to_dict()) + "\n")
    log_b.write_text(json.dumps(event(150, 200, 60).to_dict()) + "\n")
    out = tmp_path / "bounds.jsonl"
    rc = main(["ttf", "--alerts", f"{log_a},{log_b}", "--out", str(out)])
    assert rc == 0
    rows = [json.loads(l) for l in out.read_text().splitlines()]
    assert len(rows) == 101  # minutes 100..200
    first, last = rows[0], rows[-1]
    assert first == {"t": 100, "intent": 0, "lower": 60, "upper": 120}
    assert last == {"t": 200, "intent": 0, "lower": 0, "upper": 60}
    # the bound tightens when the shorter horizon joins
    at_150 = next(r for r in rows if r["t"] == 150)
    assert (at_150["lower"], at_150["upper"]) == (0, 60)


def test_ttf_requires_two_horizons(tmp_path):
    log = tmp_path / "only.jsonl"
    log.write_text(json.dumps(AlertEvent(t=1, intent=0, smoothed_risk=0.9,
                                         gate=(1.0,), root_cause=0, horizon=60,
                                         t_end=2).to_dict()) + "\n")
    assert main(["ttf", "--alerts", str(log), "--out", str(tmp_path / "b.jsonl")]) == 2
    assert main(["ttf", "--alerts", f"{log},{log}",
                 "--out", str(tmp_path / "b2.jsonl")]) == 2  # same horizon twice


def test_evaluate_and_report_rerender(bench_dir, tmp_path, capsys):
    out = tmp_path / "eval"
    rc = main(["evaluate", "--data", str(bench_dir), "--out", str(out),
               "--methods", "dist,zero", "--horizon", "60"])
    assert rc == 0
    summary = capsys.readouterr().out
    assert "dist" in summary and "zero" in summary
    assert (out / "report.json").exists()
    assert (out / "table2.csv").exists()
    assert (out / "radar.csv").exists()
    assert (out / "evalconfig.json").exists()
    rerender = tmp_path / "tables"
    rc = main(["report", "--report", str(out / "report.json"), "--out", str(rerender)])
    assert rc == 0
    assert (rerender / "table2.csv").read_text() == (out / "table2.csv").read_text()


# ---------------------------------------------------------------------------
# guards, exit codes, configuration

def test_output_guards(bench_dir, tmp_path):
    # refuse to overwrite a non-empty directory without --force
    rc = main(["generate", "--out", str(bench_dir), "--minutes", "3000"])
    assert rc == 2
    bundle = tmp_path / "m.json"
    bundle.write_text("{}")
    rc = main(["train", "--data", str(bench_dir), "--out", str(bundle),
               "--method", "dist"])
    assert rc == 2
    rc = main(["train", "--data", str(bench_dir), "--out", str(bundle),
               "--method", "dist", "--force"])
    assert rc == 0


def test_exit_code_data_errors(tmp_path):
    assert main(["train", "--data", str(tmp_path / "nope"), "--out",
                 str(tmp_path / "m.json")]) == 2
    assert main(["generate", "--out", str(tmp_path / "g"), "--minutes", "-5"]) == 2


def test_exit_code_usage_errors():
    with pytest.raises(SystemExit) as exc:
        main(["generate"])  # missing required --out
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["bogus-command"])
    assert exc.value.code == 1


def test_unknown_method_is_data_error(bench_dir, tmp_path):
    rc = main(["train", "--data", str(bench_dir), "--out", str(tmp_path / "x.json"),
               "--method", "nope"])
    assert rc == 2


def test_read_config_parsing(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# comment line\n"
        "total_minutes = 3000\n"
        "hard_negative_rate=2.5\n"
        "ramp_minutes = 30, 60  # trailing comment\n"
        "method=lr\n"
        "\n")
    parsed = read_config(cfg)
    assert parsed == {"total_minutes": 3000, "hard_negative_rate": 2.5,
                      "ramp_minutes": (30, 60), "method": "lr"}
    bad = tmp_path / "bad.cfg"
    bad.write_text("just words\n")
    with pytest.raises(ValueError, match="key=value"):
        read_config(bad)


def test_config_precedence_flag_beats_file(tmp_path):
    cfg = tmp_path / "gen.cfg"
    cfg.write_text("total_minutes=3000\nepisode_count=2\nmin_gap=200\n"
                   "start_margin=120\n")
    out1 = tmp_path / "from-file"
    assert main(["generate", "--out", str(out1), "--config", str(cfg)]) == 0
    assert len(GeneratedBenchmark.load(out1).frames) == 3000
    out2 = tmp_path / "flag-wins"
    assert main(["generate", "--out", str(out2), "--config", str(cfg),
                 "--minutes", "4000"]) == 0
    assert len(GeneratedBenchmark.load(out2).frames) == 4000
    # config seed is honoured when no flag is given
    cfg2 = tmp_path / "seeded.cfg"
    cfg2.write_text("total_minutes=3000\nepisode_count=2\nmin_gap=200\n"
                    "start_margin=120\nseed=99\n")
    out3 = tmp_path / "seeded"
    assert main(["generate", "--out", str(out3), "--config", str(cfg2)]) == 0
    b1 = GeneratedBenchmark.load(out1)
    b3 = GeneratedBenchmark.load(out3)
    assert b1.config.seed == 42 and b3.config.seed == 99
    assert not np.array_equal(b1.frames.values, b3.frames.values)
