"""Core vocabulary: labels, gate supervision, RNG streams, serialization."""
import json

import numpy as np
import pytest

from mild.types import (
    DEFAULT_INTENTS,
    KPI_NAMES,
    EpisodeAnnotation,
    EpisodeKind,
    IntentId,
    KpiFrame,
    KpiSeries,
    LabelMatrices,
    RngStream,
    episodes_from_json,
    episodes_to_json,
    fail_times_from_episodes,
    gate_supervision,
    gate_targets,
    make_bin_labels,
    make_cause_labels,
    rng_for,
    validate_intents,
)


# ---------------------------------------------------------------------------
# binary labels

def test_bin_labels_window_semantics():
    # failure at t=200, horizon 120: positives exactly at 80..199
    y = make_bin_labels([[200], [], []], horizon=120, total_minutes=400)
    assert y.shape == (400, 3)
    assert y[:, 1].sum() == 0 and y[:, 2].sum() == 0
    on = np.flatnonzero(y[:, 0])
    assert on[0] == 80 and on[-1] == 199 and on.size == 120
    assert y[200, 0] == 0  # the failure minute itself is not a positive


def test_bin_labels_truncated_at_series_start():
    y = make_bin_labels([[50]], horizon=120, total_minutes=300)
    on = np.flatnonzero(y[:, 0])
    assert on[0] == 0 and on[-1] == 49 and on.size == 50


def test_bin_labels_multiple_failures_per_intent():
    y = make_bin_labels([[100, 300]], horizon=60, total_minutes=400)
    assert y[40:100, 0].all() and y[240:300, 0].all()
    assert y[100:240, 0].sum() == 0


def test_bin_labels_positive_count_is_min_horizon_fail():
    for fail, horizon in [(200, 120), (80, 120), (120, 120), (5, 120)]:
        y = make_bin_labels([[fail]], horizon=horizon, total_minutes=500)
        assert y[:, 0].sum() == min(horizon, fail)


def test_bin_labels_rejects_bad_input():
    with pytest.raises(ValueError):
        make_bin_labels([[100]], horizon=0, total_minutes=200)
    with pytest.raises(ValueError):
        make_bin_labels([[300]], horizon=10, total_minutes=200)
    with pytest.raises(ValueError):
        make_bin_labels([[0]], horizon=10, total_minutes=200)


# ---------------------------------------------------------------------------
# cause labels

def _codrift(onset, fail_c, lag, cause=0, victim=1):
    return EpisodeAnnotation(kind=EpisodeKind.CO_DRIFT, onset_t=onset,
                             fail_t={cause: fail_c, victim: fail_c + lag},
                             cause=cause, victim=victim)


def test_cause_labels_mark_only_the_cause():
    ep = _codrift(onset=400, fail_c=500, lag=20)
    y_bin = make_bin_labels(fail_times_from_episodes([ep], 3), 120, 1000)
    y_cause = make_cause_labels(y_bin, [ep], horizon=120)
    # cause column mirrors its own binary window
    assert np.array_equal(y_cause[:, 0], y_bin[:, 0])
    # the victim fails too, but never as root cause
    assert y_bin[:, 1].sum() == 120
    assert y_cause[:, 1].sum() == 0
    assert y_cause[:, 2].sum() == 0


def test_cause_labels_subset_invariant_and_build():
    eps = [
        EpisodeAnnotation(kind=EpisodeKind.SIMPLE_DRIFT, onset_t=100,
                          fail_t={2: 250}, cause=2),
        _codrift(onset=800, fail_c=900, lag=15, cause=1, victim=0),
    ]
    labels = LabelMatrices.build(eps, 3, horizon=60, total_minutes=1500)
    assert np.all(labels.y_bin >= labels.y_cause)
    assert labels.y_cause[:, 2].sum() == 60
    assert labels.y_cause[:, 1].sum() == 60
    assert labels.y_cause[:, 0].sum() == 0


def test_cause_labels_unknown_intent_rejected():
    ep = EpisodeAnnotation(kind=EpisodeKind.SIMPLE_DRIFT, onset_t=10,
                           fail_t={5: 50}, cause=5)
    with pytest.raises(ValueError):
        fail_times_from_episodes([ep], 3)


# ---------------------------------------------------------------------------
# gate supervision

def test_gate_supervision_prefers_cause_then_bin_then_abstains():
    y_bin = np.array([1, 1, 0])
    y_cause = np.array([0, 1, 0])
    np.testing.assert_allclose(gate_supervision(y_bin, y_cause), [0.0, 1.0, 0.0])
    np.testing.assert_allclose(gate_supervision(y_bin, np.zeros(3)), [0.5, 0.5, 0.0])
    assert gate_supervision(np.zeros(3), np.zeros(3)) is None


def test_gate_targets_vectorized_matches_scalar():
    rng = np.random.default_rng(0)
    y_bin = (rng.random((50, 3)) < 0.3).astype(np.int8)
    y_cause = (y_bin & (rng.random((50, 3)) < 0.5)).astype(np.int8)
    targets, mask = gate_targets(y_bin, y_cause)
    for t in range(50):
        expected = gate_supervision(y_bin[t], y_cause[t])
        if expected is None:
            assert not mask[t]
        else:
            assert mask[t]
            np.testing.assert_allclose(targets[t], expected)
    assert np.allclose(targets.sum(axis=1), 1.0)


# ---------------------------------------------------------------------------
# RNG streams

def test_rng_stream_reproducible_and_label_sensitive():
    a1 = rng_for(42, "noise/cpu").normal(size=10)
    a2 = rng_for(42, "noise/cpu").normal(size=10)
    b = rng_for(42, "noise/ram").normal(size=10)
    c = rng_for(43, "noise/cpu").normal(size=10)
    np.testing.assert_array_equal(a1, a2)
    assert not np.allclose(a1, b)
    assert not np.allclose(a1, c)


def test_rng_stream_independent_of_creation_order():
    s1 = RngStream(7, "x").generator().normal(size=5)
    _ = RngStream(7, "y").generator().normal(size=100)
    s1_again = RngStream(7, "x").generator().normal(size=5)
    np.testing.assert_array_equal(s1, s1_again)


def test_rng_stream_rejects_bad_seed():
    with pytest.raises(ValueError):
        RngStream(-1, "x")


# ---------------------------------------------------------------------------
# frames and series

def test_kpi_frame_validation():
    vals = tuple(float(i) for i in range(8))
    f = KpiFrame(3, vals)
    assert f.as_dict()["cpu_pct"] == 0.0
    with pytest.raises(ValueError):
        KpiFrame(0, vals[:-1])
    with pytest.raises(ValueError):
        KpiFrame(0, (101.0,) + vals[1:])  # percentage out of range
    with pytest.raises(ValueError):
        KpiFrame(0, (float("nan"),) + vals[1:])


def test_kpi_series_roundtrip_and_segments(tmp_path):
    t = np.array([0, 1, 2, 5, 6])  # gap between 2 and 5
    values = np.abs(np.random.default_rng(1).normal(50, 5, size=(5, 8)))
    s = KpiSeries(t, values)
    assert [sl.start for sl in s.contiguous_segments()] == [0, 3]
    path = tmp_path / "kpis.csv"
    s.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "t," + ",".join(KPI_NAMES)
    s2 = KpiSeries.from_csv(path)
    np.testing.assert_array_equal(s.t, s2.t)
    np.testing.assert_allclose(s.values, s2.values, atol=1e-6)


def test_kpi_series_rejects_disorder():
    vals = np.zeros((3, 8))
    with pytest.raises(ValueError):
        KpiSeries(np.array([0, 2, 1]), vals)
    with pytest.raises(ValueError):
        KpiSeries(np.array([], dtype=int), np.zeros((0, 8)))


# ---------------------------------------------------------------------------
# episode annotations

def test_episode_validation():
    with pytest.raises(ValueError):  # failure needs fail_t after onset
        EpisodeAnnotation(kind=EpisodeKind.SIMPLE_DRIFT, onset_t=100,
                          fail_t={0: 100}, cause=0)
    with pytest.raises(ValueError):  # co-drift victim must differ
        EpisodeAnnotation(kind=EpisodeKind.CO_DRIFT, onset_t=0,
                          fail_t={0: 10, 1: 20}, cause=0, victim=0)
    with pytest.raises(ValueError):  # benign carries no failures
        EpisodeAnnotation(kind=EpisodeKind.BENIGN_NEGATIVE, onset_t=0, fail_t={0: 5})
    ann = EpisodeAnnotation(kind=EpisodeKind.BENIGN_NEGATIVE, onset_t=7, end_t=20)
    assert ann.affected == ()


def test_episode_json_roundtrip(tmp_path):
    eps = [
        _codrift(onset=10, fail_c=60, lag=5, cause=2, victim=0),
        EpisodeAnnotation(kind=EpisodeKind.BENIGN_NEGATIVE, onset_t=200, end_t=210),
    ]
    path = tmp_path / "episodes.json"
    episodes_to_json(eps, path)
    raw = json.loads(path.read_text())
    assert raw[0]["kind"] == "CoDrift"
    assert raw[0]["cause"] == "analytics" and raw[0]["victim"] == "api"
    assert raw[0]["fail_t_map"] == {"analytics": 60, "api": 65}
    back = episodes_from_json(path)
    assert back == eps


def test_intent_validation():
    validate_intents(DEFAULT_INTENTS)
    with pytest.raises(ValueError):
        validate_intents((IntentId(0, "a"),))
    with pytest.raises(ValueError):
        validate_intents((IntentId(0, "a"), IntentId(2, "b")))
    with pytest.raises(ValueError):
        validate_intents((IntentId(0, "a"), IntentId(1, "a")))
