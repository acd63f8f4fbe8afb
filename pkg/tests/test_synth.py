"""Synthetic family generation, temporal split, and the experiment runner."""

import json
import math
from datetime import date

import numpy as np
import pytest

from deeporigin import experiment as ex
from deeporigin import synth
from deeporigin.classifier import NetworkConfig
from deeporigin.errors import ConfigError, DataError
from deeporigin.rng import RngStream


def spec(label="fam", flip=0.05, count=20, dim=50, proto=None,
         start=date(2016, 1, 1), end=date(2017, 12, 31)):
    if proto is None:
        proto = tuple(range(0, dim, 2))
    return synth.SyntheticFamilySpec(
        family_label=label,
        prototype=proto,
        dimension=dim,
        flip_rate=flip,
        sample_count=count,
        date_start=start,
        date_end=end,
    )


# ---------------------------------------------------------------------------
# generate_family
# ---------------------------------------------------------------------------

def test_zero_flip_rate_reproduces_prototype():
    s = spec(flip=0.0, count=5)
    samples = synth.generate_family(s, RngStream(3, "g"))
    for sample in samples:
        assert sample.vector.set_indices == s.prototype


def test_generation_deterministic():
    s = spec()
    a = synth.generate_family(s, RngStream(3, "g"))
    b = synth.generate_family(s, RngStream(3, "g"))
    assert a == b


def test_flip_rate_mean_hamming_distance():
    dim, p, n = 500, 0.05, 1000
    s = spec(label="h", flip=p, count=n, dim=dim, proto=tuple(range(0, dim, 3)))
    proto = np.zeros(dim)
    proto[list(s.prototype)] = 1.0
    samples = synth.generate_family(s, RngStream(12, "h"))
    dists = [
        np.count_nonzero(sample.vector.densify() != proto) for sample in samples
    ]
    sigma = math.sqrt(dim * p * (1 - p)) / math.sqrt(n)
    assert abs(np.mean(dists) - dim * p) < 3.0 * sigma


def test_dates_inside_range_and_ids_unique():
    s = spec(count=60, start=date(2016, 5, 1), end=date(2016, 5, 10))
    samples = synth.generate_family(s, RngStream(9, "d"))
    assert all(s_.first_seen >= date(2016, 5, 1) for s_ in samples)
    assert all(s_.first_seen <= date(2016, 5, 10) for s_ in samples)
    assert len({s_.sample_id for s_ in samples}) == len(samples)


def test_rejects_flip_rate_half():
    with pytest.raises(ConfigError, match="flip_rate"):
        spec(flip=0.5).validate()


# ---------------------------------------------------------------------------
# temporal_split
# ---------------------------------------------------------------------------

def test_temporal_split_partitions():
    s = spec(count=100)
    samples = synth.generate_family(s, RngStream(5, "t"))
    cutoff = date(2017, 1, 18)
    train, test = synth.temporal_split(samples, cutoff)
    assert len(train) + len(test) == len(samples)
    assert all(x.first_seen < cutoff for x in train)
    assert all(x.first_seen >= cutoff for x in test)
    assert max(x.first_seen for x in train) < min(x.first_seen for x in test)


def test_temporal_split_empty_test():
    s = spec(count=10, start=date(2016, 1, 1), end=date(2016, 2, 1))
    samples = synth.generate_family(s, RngStream(6, "t"))
    with pytest.raises(DataError, match="empty test"):
        synth.temporal_split(samples, date(2018, 1, 1))


def test_temporal_split_empty_train():
    s = spec(count=10, start=date(2016, 1, 1), end=date(2016, 2, 1))
    samples = synth.generate_family(s, RngStream(6, "t"))
    with pytest.raises(DataError, match="empty train"):
        synth.temporal_split(samples, date(2015, 1, 1))


# ---------------------------------------------------------------------------
# prototypes
# ---------------------------------------------------------------------------

def test_separated_prototype_respects_floor():
    rng = RngStream(7, "sep")
    existing = [synth.random_prototype(200, rng) for _ in range(5)]
    candidate = synth.separated_prototype(200, existing, rng, min_separation_fraction=0.2)
    assert all(synth.hamming(candidate, p) >= 40 for p in existing)


def test_separated_prototype_gives_up():
    rng = RngStream(8, "sep2")
    # dimension 2 cannot hold many mutually distant prototypes
    existing = [(0,), (1,), (), (0, 1)]
    with pytest.raises(DataError, match="could not place"):
        synth.separated_prototype(2, existing, rng, min_separation_fraction=0.9, max_tries=20)


# ---------------------------------------------------------------------------
# ExperimentConfig
# ---------------------------------------------------------------------------

def _tiny_config(seed=3, epochs=2, **overrides):
    dim = 60
    proto_rng = RngStream(seed, "prototypes")
    known = [
        synth.SyntheticFamilySpec(
            family_label=f"known-{i}",
            prototype=synth.random_prototype(dim, proto_rng),
            dimension=dim,
            flip_rate=0.05,
            sample_count=24,
            date_start=date(2016, 1, 1),
            date_end=date(2017, 12, 31),
        )
        for i in range(4)
    ]
    novel = [
        synth.SyntheticFamilySpec(
            family_label=f"novel-{i}",
            prototype=synth.separated_prototype(
                dim, [k.prototype for k in known], proto_rng
            ),
            dimension=dim,
            flip_rate=0.05,
            sample_count=16,
            date_start=date(2017, 1, 19),
            date_end=date(2017, 12, 31),
        )
        for i in range(2)
    ]
    cfg = ex.ExperimentConfig(
        known_family_specs=known,
        novel_family_specs=novel,
        cutoff_date=date(2017, 1, 18),
        network=NetworkConfig(layer_widths=[dim, 16, 8, 4], epochs=epochs, seed=seed),
        seed=seed,
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


def test_config_rejects_label_overlap():
    cfg = _tiny_config()
    cfg.novel_family_specs[0] = spec(label="known-0", dim=60, proto=(1, 5))
    with pytest.raises(ConfigError, match="overlap"):
        cfg.validate()


def test_config_rejects_cutoff_outside_range():
    cfg = _tiny_config()
    cfg.cutoff_date = date(2020, 1, 1)
    with pytest.raises(ConfigError, match="cutoff"):
        cfg.validate()


def test_config_rejects_dimension_mismatch():
    cfg = _tiny_config()
    cfg.network.layer_widths[0] = 61
    with pytest.raises(ConfigError, match="dimension"):
        cfg.validate()


def test_config_json_round_trip():
    cfg = _tiny_config()
    text = ex.config_to_json(cfg)
    loaded = ex.config_from_json(text)
    assert loaded.known_family_specs == cfg.known_family_specs
    assert loaded.novel_family_specs == cfg.novel_family_specs
    assert loaded.cutoff_date == cfg.cutoff_date
    assert loaded.network == cfg.network
    assert ex.config_to_json(loaded) == text


def test_default_config_shape():
    cfg = ex.default_config(seed=1, epochs=3)
    assert len(cfg.known_family_specs) == 14
    assert len(cfg.novel_family_specs) == 4
    assert cfg.network.layer_widths == [500, 100, 100, 30, 14]
    assert all(s.sample_count == 200 for s in cfg.known_family_specs)
    assert all(s.flip_rate == 0.05 for s in cfg.known_family_specs)
    # novel prototypes sit at least 0.2 * D from every known prototype
    for nspec in cfg.novel_family_specs:
        for kspec in cfg.known_family_specs:
            assert synth.hamming(nspec.prototype, kspec.prototype) >= 100


# ---------------------------------------------------------------------------
# run_experiment (tiny scale)
# ---------------------------------------------------------------------------

def test_experiment_zero_epochs_completes(tmp_path):
    cfg = _tiny_config(epochs=0)
    result = ex.run_experiment(cfg, tmp_path / "run")
    # untrained head is zero-initialized: uniform output, near-chance accuracy
    assert result.test_accuracy <= 2.0 / 4.0
    for name in (
        "dataset.tsv", "model.json", "training_report.csv", "signatures_known.csv",
        "signatures_novel.csv", "family_stats_known.csv", "family_stats_novel.csv",
        "roc.csv", "calibration.json", "summary.json", "scatter2d.svg",
        "experiment_config.json",
    ):
        assert (tmp_path / "run" / name).exists(), name
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    assert summary["classifier"]["epochs"] == 0
    assert summary["counts"]["novel"] == 32


def test_experiment_deterministic(tmp_path):
    cfg1 = _tiny_config(epochs=2)
    cfg2 = _tiny_config(epochs=2)
    r1 = ex.run_experiment(cfg1, tmp_path / "a")
    r2 = ex.run_experiment(cfg2, tmp_path / "b")
    assert r1.test_accuracy == r2.test_accuracy
    for name in ("model.json", "signatures_known.csv", "signatures_novel.csv",
                 "roc.csv", "scatter2d.svg", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_experiment_novel_never_trains(tmp_path):
    cfg = _tiny_config(epochs=1)
    result = ex.run_experiment(cfg, tmp_path / "run")
    blob = (tmp_path / "run" / "model.json").read_bytes()
    labels = json.loads(blob)["label_index"]
    assert all(lab.startswith("known-") for lab in labels)
    novel_rows = {r.family for r in result.stats_novel.rows}
    assert novel_rows == {"novel-0", "novel-1"}


def test_experiment_ablation_summary(tmp_path):
    cfg = _tiny_config(epochs=2, ablation_relu=True, train_viz_model=False)
    result = ex.run_experiment(cfg, tmp_path / "run")
    assert result.ablation is not None
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    assert set(summary["ablation"]) == {"prelu_test_accuracy", "relu_test_accuracy"}
    assert 0.0 <= summary["ablation"]["relu_test_accuracy"] <= 1.0


def test_stage_context_prefixes_errors():
    with pytest.raises(DataError, match=r"\[stage: temporal-split\] empty test"):
        with ex._stage("temporal-split"):
            raise DataError("empty test: every sample predates the cutoff")
    # non-ValueError exceptions pass through untouched
    with pytest.raises(RuntimeError, match=r"^boom$"):
        with ex._stage("x"):
            raise RuntimeError("boom")
