import math

import numpy as np
import pytest

import blinklight


def tiny(tmp_path):
    return {
        "out": str(tmp_path / "out"),
        "seed": 5,
        "synth": {"clip_count": 2, "duration_s": 10.0, "n_participants": 4,
                  "events_min": 1, "events_max": 1, "first_event_s": 3.0, "last_event_margin_s": 3.0},
        "model": {"filters": [4, 4, 4], "kernel_size": 3, "window": 16},
        "dataset": {"stride": 4},
        "train": {"batch_size": 32, "max_epochs": 1},
        "stats": {"n_shuffles": 20, "pre_window": 10, "post_window": 20},
    }


def test_version_and_defaults():
    assert blinklight.__version__
    cfg = blinklight.default_config()
    assert cfg["model"]["window"] == 90
    assert cfg["model"]["filters"] == [64, 128, 64]


def test_unknown_key_is_rejected():
    with pytest.raises(blinklight.ConfigError):
        blinklight.resolve_config({"trian": {}})


def test_pearson_and_surrogates():
    x = [1.0, 2.0, 3.0, 4.0]
    assert blinklight.pearson(x, [1.0, 2.0, 3.0, 5.0]) == pytest.approx(6.5 / math.sqrt(5.0 * 8.75))
    rng = np.random.default_rng(0)
    v = rng.normal(size=2000).tolist()
    rep = blinklight.surrogate_test(v, v, n_shuffles=200, seed=1)
    assert rep["significant"] and rep["r"] == pytest.approx(1.0)


def test_detect_blinks_on_injected_artifact():
    trace = [3.0] * 240
    for i, v in enumerate([4.0, 4.2, 3.2, 2.0, 1.0, 3.0]):
        trace[100 + i] = v
    trace[10] = None
    events = blinklight.detect_blinks(trace, sample_rate=120.0)
    assert len(events) == 1
    onset, offset = events[0]
    assert 100 / 120 <= onset <= 102 / 120 < offset


def test_detect_highlights():
    values = [0.5] * 300
    for i in range(100, 110):
        values[i] = 0.0
    segs = blinklight.detect_highlights(values, first_valid_frame=89)
    assert [(s["start_frame"], s["end_frame"]) for s in segs] == [(189, 198)]
    with pytest.raises(blinklight.ConfigError):
        blinklight.detect_highlights(values, mode="bogus")


def test_tiny_pipeline_end_to_end(tmp_path):
    cfg = tiny(tmp_path)
    assert blinklight.stage_plan("reproduce", cfg) == list(blinklight.STAGES)
    with pytest.raises(blinklight.MissingStageError):
        blinklight.run_stage("dataset", cfg)
    results = blinklight.run_all(cfg)
    assert [r["stage"] for r in results] == list(blinklight.STAGES)
    ids = blinklight.clip_ids(cfg)
    assert len(ids) == 2
    first, values = blinklight.read_prediction(cfg, ids[0])
    assert first == 15 and len(values) == 300 - 15

    joints = blinklight.ingest_clip(tmp_path / "out" / "corpus" / ids[0])
    assert joints.shape == (300, 36)
    first2, values2 = blinklight.predict(tmp_path / "out" / "train" / f"fold_{ids[0]}.ckpt", joints)
    assert first2 == first
    np.testing.assert_allclose(values2, values, rtol=0, atol=1e-12)
