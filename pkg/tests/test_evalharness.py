"""Blocked evaluation: fold plan, event scoring, aggregation, report files."""
import json

import numpy as np
import pytest

from mild.alerting import AlertEvent, AlertPolicy
from mild.evalharness import (
    EvalReport,
    FoldMetrics,
    block_bounds,
    fold_plan,
    percent_of_best,
    radar_values,
    run_cv,
    score_events,
    write_report,
)
from mild.synthgen import generate
from mild.types import EpisodeAnnotation, EpisodeKind, make_bin_labels


def ev(t, intent, t_end, root_cause=None, horizon=120):
    return AlertEvent(t=t, intent=intent, smoothed_risk=0.9,
                      gate=(1.0, 0.0, 0.0), root_cause=root_cause if root_cause is not None else intent,
                      horizon=horizon, t_end=t_end)


# ---------------------------------------------------------------------------
# fold plan

def test_block_bounds_even_split():
    assert block_bounds(110, 11) == [round(i * 10) for i in range(12)]
    bounds = block_bounds(1000, 7)
    assert bounds[0] == 0 and bounds[-1] == 1000
    assert all(b2 > b1 for b1, b2 in zip(bounds, bounds[1:]))
    with pytest.raises(ValueError):
        block_bounds(100, 1)
    with pytest.raises(ValueError):
        block_bounds(10, 11)


def test_fold_plan_is_chronological():
    folds = fold_plan(1100, 11)
    assert len(folds) == 10
    assert folds[0].index == 1
    for f in folds:
        assert f.train_rows.start == 0
        assert f.train_rows.stop == f.test_rows.start  # test follows train
    assert folds[-1].test_rows.stop == 1100
    # each fold trains on strictly more data than the previous
    stops = [f.train_rows.stop for f in folds]
    assert stops == sorted(stops) and len(set(stops)) == len(stops)


# ---------------------------------------------------------------------------
# event scoring against hand-built ground truth

def hand_truth():
    T, K, H = 1000, 3, 120
    ep1 = EpisodeAnnotation(kind=EpisodeKind.SIMPLE_DRIFT, onset_t=440,
                            fail_t={0: 500}, cause=0, end_t=515)
    ep2 = EpisodeAnnotation(kind=EpisodeKind.CO_DRIFT, onset_t=700,
                            fail_t={1: 760, 2: 780}, cause=1, victim=2, end_t=795)
    fails = [[500], [760], [780]]
    y_bin = make_bin_labels(fails, H, T)
    return [ep1, ep2], y_bin, H, T


def test_score_events_hand_example():
    episodes, y_bin, H, T = hand_truth()
    events = [
        ev(100, 0, 120),                 # healthy time: false positive
        ev(450, 0, 470, root_cause=0),   # detects ep1, lead 50
        ev(720, 1, 765, root_cause=2),   # detects ep2/intent1, wrong verdict
        ev(770, 2, 790, root_cause=1),   # detects ep2/intent2
    ]
    m = score_events(events, episodes, y_bin, H, slice(0, T), fold=3,
                     thresholds=(0.2, 0.3, 0.4))
    assert m.fold == 3
    assert m.episode_counts == [1, 1, 1]
    assert m.detected_counts == [1, 1, 1]
    assert m.lead_minutes == [[50.0], [40.0], [10.0]]
    assert m.fp_events == 1
    assert m.fp_per_day == pytest.approx(1.0 / (T / 1440.0))
    # verdicts: ep1 correct; ep2 judged by its earliest hit (t=720, verdict 2, truth 1)
    assert (m.disamb_total, m.disamb_correct) == (2, 1)
    assert (m.codrift_total, m.codrift_correct) == (1, 0)
    assert m.disamb_accuracy() == pytest.approx(0.5)
    assert m.detection_rate(0) == 1.0 and m.mean_lead(0) == 50.0
    assert m.thresholds == [0.2, 0.3, 0.4]
    assert m.n_events == 4
    assert FoldMetrics.from_dict(m.to_dict()) == m


def test_score_events_qualification_rules():
    episodes, y_bin, H, T = hand_truth()
    # too late (t >= fail), too early (span ends before the window), wrong intent
    events = [ev(500, 0, 520), ev(200, 0, 360), ev(450, 1, 470)]
    m = score_events(events, episodes, y_bin, H, slice(0, T))
    assert m.detected_counts == [0, 0, 0]
    assert m.disamb_total == 0
    # all three are also false positives: the label is 0 at t=200 (healthy),
    # at t=450 for intent 1 (wrong column), and at t=500 (the failure minute
    # itself lies outside the pre-failure window)
    assert m.fp_events == 3
    # earliest qualifying event wins the lead computation
    events = [ev(470, 0, 480), ev(390, 0, 420)]
    m = score_events(events, episodes, y_bin, H, slice(0, T))
    assert m.lead_minutes[0] == [110.0]


def test_score_events_lead_clamped_to_horizon():
    episodes, y_bin, H, T = hand_truth()
    # event opens long before the window: lead caps at the horizon
    m = score_events([ev(300, 0, 460)], episodes, y_bin, H, slice(0, T))
    assert m.lead_minutes[0] == [float(H)]


def test_score_events_restricts_to_test_block():
    episodes, y_bin, H, T = hand_truth()
    events = [ev(450, 0, 470), ev(720, 1, 765), ev(770, 2, 790)]
    m = score_events(events, episodes, y_bin, H, slice(600, T))
    assert m.episode_counts == [0, 1, 1]  # ep1 fails at 500, outside the block
    assert m.minutes_test == 400


def test_victim_only_detection_still_judges_cause():
    episodes, y_bin, H, T = hand_truth()
    m = score_events([ev(770, 2, 790, root_cause=1)], episodes, y_bin, H, slice(0, T))
    assert m.detected_counts == [0, 0, 1]
    assert (m.disamb_total, m.disamb_correct) == (1, 1)  # verdict 1 == cause
    assert (m.codrift_total, m.codrift_correct) == (1, 1)


# ---------------------------------------------------------------------------
# cross-validation driver on a small generated benchmark

@pytest.mark.filterwarnings("ignore:folds")
@pytest.mark.filterwarnings("ignore:intent")          # zero scorer has no mass
@pytest.mark.filterwarnings("ignore:Mean of empty")   # zero scorer has no leads
def test_run_cv_oracle_dominates_zero():
    bench = generate(total_minutes=6000, episode_count=6, seed=13)
    reports = run_cv(bench.frames, bench.episodes, methods=("oracle", "zero"),
                     horizon=60, n_blocks=4, seed=1)
    oracle, zero = reports["oracle"], reports["zero"]
    assert oracle.overall_detection() == pytest.approx(1.0)
    assert oracle.fp_mean_std()[0] == pytest.approx(0.0)
    assert zero.overall_detection() == pytest.approx(0.0)
    assert zero.fp_mean_std()[0] == 0.0
    assert all(m.n_events == 0 for m in zero.folds)
    # oracle leads are essentially the full horizon
    assert oracle.overall_lead() > 50.0
    # round trip through dict/json (string compare: NaN != NaN as objects)
    again = EvalReport.from_dict(json.loads(json.dumps(oracle.to_dict())))
    assert json.dumps(again.to_dict(), sort_keys=True) == \
        json.dumps(oracle.to_dict(), sort_keys=True)


def test_run_cv_validation():
    bench = generate(total_minutes=4000, episode_count=3, seed=2)
    with pytest.raises(ValueError, match="unknown method"):
        run_cv(bench.frames, bench.episodes, methods=("nope",), n_blocks=3)
    shifted = bench.frames
    shifted = type(shifted)(shifted.t + 5, shifted.values)
    with pytest.raises(ValueError, match="contiguous"):
        run_cv(shifted, bench.episodes, methods=("zero",), n_blocks=3)


@pytest.mark.filterwarnings("ignore:folds")
@pytest.mark.filterwarnings("ignore:intent")
@pytest.mark.filterwarnings("ignore:Mean of empty")
def test_run_cv_parallel_matches_serial():
    bench = generate(total_minutes=6000, episode_count=5, seed=21)
    kw = dict(methods=("dist", "zero"), horizon=60, n_blocks=4, seed=3)
    serial = run_cv(bench.frames, bench.episodes, jobs=1, **kw)
    parallel = run_cv(bench.frames, bench.episodes, jobs=2, **kw)
    for name in kw["methods"]:
        assert json.dumps(serial[name].to_dict(), sort_keys=True) == \
            json.dumps(parallel[name].to_dict(), sort_keys=True)


# ---------------------------------------------------------------------------
# aggregation and comparison

def fold_metrics(detection, leads, fp_per_day, disamb, fold=1):
    detected = [int(round(d)) for d in detection]
    return FoldMetrics(
        fold=fold, minutes_test=1440, episode_counts=[1, 1, 1],
        detected_counts=detected,
        lead_minutes=[[l] if l is not None else [] for l in leads],
        fp_events=int(fp_per_day), fp_per_day=fp_per_day,
        disamb_total=disamb[1], disamb_correct=disamb[0],
        codrift_total=0, codrift_correct=0, thresholds=[0.5] * 3,
        n_events=sum(detected))


def test_radar_and_percent_of_best():
    strong = EvalReport(method="a", horizon=120, n_intents=3,
                        folds=[fold_metrics([1, 1, 1], [100, 80, 60], 3.9, (4, 4))])
    weak = EvalReport(method="b", horizon=120, n_intents=3,
                      folds=[fold_metrics([1, 0, 0], [50, None, None], 7.8, (1, 2))])
    rv = radar_values(strong)
    assert rv["detection"] == pytest.approx(1.0)
    assert rv["lead"] == pytest.approx(80.0)
    assert rv["inverted_fp"] == pytest.approx(1.0 / 4.9)
    assert rv["disambiguation"] == pytest.approx(1.0)
    pob = percent_of_best({"a": strong, "b": weak})
    assert pob["a"] == pytest.approx({"detection": 100.0, "lead": 100.0,
                                      "inverted_fp": 100.0, "disambiguation": 100.0})
    assert pob["b"]["detection"] == pytest.approx(100.0 / 3.0)
    assert pob["b"]["lead"] == pytest.approx(62.5)          # 50 / 80
    assert pob["b"]["inverted_fp"] == pytest.approx(100.0 * (1 / 8.8) / (1 / 4.9))
    assert pob["b"]["disambiguation"] == pytest.approx(50.0)


@pytest.mark.filterwarnings("ignore:Mean of empty")
def test_percent_of_best_zero_axis():
    z1 = EvalReport(method="a", horizon=120, n_intents=3,
                    folds=[fold_metrics([0, 0, 0], [None] * 3, 0.0, (0, 0))])
    z2 = EvalReport(method="b", horizon=120, n_intents=3,
                    folds=[fold_metrics([0, 0, 0], [None] * 3, 0.0, (0, 0))])
    pob = percent_of_best({"a": z1, "b": z2})
    assert pob["a"]["detection"] == 100.0  # best is zero; equal-zero scores 100
    assert pob["b"]["detection"] == 100.0


def test_write_report_files(tmp_path):
    strong = EvalReport(method="a", horizon=120, n_intents=3,
                        folds=[fold_metrics([1, 1, 1], [100, 80, 60], 1.0, (4, 4))])
    weak = EvalReport(method="b", horizon=120, n_intents=3,
                      folds=[fold_metrics([1, 0, 0], [50, None, None], 2.0, (1, 2))])
    write_report(tmp_path, {"a": strong, "b": weak}, metadata={"note": "x"})
    payload = json.loads((tmp_path / "report.json").read_text())
    assert payload["metadata"] == {"note": "x"}
    assert set(payload["methods"]) == {"a", "b"}
    assert "fp_definition" in payload
    assert payload["percent_of_best"]["a"]["detection"] == 100.0
    table = (tmp_path / "table2.csv").read_text().splitlines()
    assert table[0] == "method,metric,detail,mean,std"
    assert any(line.startswith("a,detection_rate,intent0,1,") for line in table)
    radar = (tmp_path / "radar.csv").read_text().splitlines()
    assert radar[0] == "method,axis,value,percent_of_best"
    assert len(radar) == 1 + 2 * 4


def test_aggregation_skips_empty_folds():
    with_ep = fold_metrics([1, 1, 1], [90, 90, 90], 1.0, (3, 3), fold=1)
    empty = FoldMetrics(fold=2, minutes_test=1440, episode_counts=[0, 0, 0],
                        detected_counts=[0, 0, 0], lead_minutes=[[], [], []],
                        fp_events=0, fp_per_day=0.0, disamb_total=0,
                        disamb_correct=0, codrift_total=0, codrift_correct=0,
                        thresholds=[0.5] * 3, n_events=0)
    r = EvalReport(method="a", horizon=120, n_intents=3, folds=[with_ep, empty])
    assert r.detection_mean_std(0) == (1.0, 0.0)   # empty fold ignored
    assert r.lead_mean_std(0) == (90.0, 0.0)
    assert r.fp_mean_std()[0] == pytest.approx(0.5)  # fp averages over all folds
    assert r.disamb_mean_std() == (1.0, 0.0)
    assert r.pooled_disamb() == 1.0
    assert np.isnan(r.pooled_codrift_disamb()[0])
