"""End-to-end experiment: generate, split, train, sign, calibrate, report.

The four stages mirror the production protocol at desk scale: (1) train a
family classifier on pre-cutoff samples of the known families, (2) strip its
softmax head into a signature generator, (3) sign the post-cutoff known
samples and the held-out novel families, (4) calibrate an origin-distance
threshold on one half of the signatures and evaluate it on the other half.

Everything is seeded; apart from the wall-clock column of the training
report CSVs, every emitted text artifact (model JSON, TSV/CSV outputs,
calibration and summary JSON, scatter SVG) is byte-reproducible for a fixed
config. The PNG report figures depend on the matplotlib build and carry no
byte-level guarantee.
"""

from __future__ import annotations

import json
import math
import os
from contextlib import contextmanager
from dataclasses import dataclass, replace
from datetime import date

import numpy as np

from . import fileio, plotting
from .classifier import (
    LabeledDataset,
    NetworkConfig,
    TrainReport,
    build_model,
    evaluate,
    save_model,
    train,
    write_train_report,
)
from .errors import ConfigError
from .novelty import (
    FamilyStats,
    NoveltyCalibration,
    RocCurve,
    calibrate_threshold,
    distance_from_origin,
    family_stats,
    roc_curve,
    signature_batch,
    strip_softmax,
    write_calibration_json,
    write_roc_csv,
    write_signature_csv,
    write_stats_csv,
)
from .rng import RngStream
from .synth import SyntheticFamilySpec, generate_family, random_prototype, separated_prototype, temporal_split
from .vectorizer import VectorRecord, write_vector_file

DEFAULT_KNOWN_FAMILIES = 14
DEFAULT_NOVEL_FAMILIES = 4
DEFAULT_DIMENSION = 500
DEFAULT_SAMPLES_PER_FAMILY = 200
DEFAULT_FLIP_RATE = 0.05
DEFAULT_CUTOFF = date(2017, 1, 18)
DEFAULT_KNOWN_RANGE = (date(2015, 1, 1), date(2017, 12, 31))
DEFAULT_NOVEL_RANGE = (date(2017, 1, 19), date(2017, 12, 31))


@dataclass
class ExperimentConfig:
    known_family_specs: list[SyntheticFamilySpec]
    novel_family_specs: list[SyntheticFamilySpec]
    cutoff_date: date
    network: NetworkConfig
    seed: int
    train_viz_model: bool = True
    ablation_relu: bool = False

    def validate(self) -> None:
        if not self.known_family_specs:
            raise ConfigError("known_family_specs: need at least one known family")
        if not self.novel_family_specs:
            raise ConfigError("novel_family_specs: need at least one novel family")
        known = {s.family_label for s in self.known_family_specs}
        novel = {s.family_label for s in self.novel_family_specs}
        overlap = sorted(known & novel)
        if overlap:
            raise ConfigError(f"novel family labels overlap known ones: {overlap}")
        for spec in self.known_family_specs + self.novel_family_specs:
            spec.validate()
            if spec.dimension != self.network.layer_widths[0]:
                raise ConfigError(
                    f"family {spec.family_label}: dimension {spec.dimension} != "
                    f"network input width {self.network.layer_widths[0]}"
                )
        lo = min(s.date_start for s in self.known_family_specs)
        hi = max(s.date_end for s in self.known_family_specs)
        if not lo < self.cutoff_date <= hi:
            raise ConfigError(
                f"cutoff_date {self.cutoff_date} must fall inside the known "
                f"families' date range [{lo}, {hi}]"
            )
        if len(self.known_family_specs) != self.network.layer_widths[-1]:
            raise ConfigError(
                f"network outputs {self.network.layer_widths[-1]} classes for "
                f"{len(self.known_family_specs)} known families"
            )


def default_config(seed: int = 7, epochs: int = 100, ablation_relu: bool = False) -> ExperimentConfig:
    """The stock desk-scale experiment: 14 known + 4 novel Bernoulli families."""
    dim = DEFAULT_DIMENSION
    proto_rng = RngStream(seed, "prototypes")
    known_protos = [random_prototype(dim, proto_rng) for _ in range(DEFAULT_KNOWN_FAMILIES)]
    placed = list(known_protos)
    novel_protos = []
    for _ in range(DEFAULT_NOVEL_FAMILIES):
        p = separated_prototype(dim, placed, proto_rng)
        novel_protos.append(p)
        placed.append(p)

    known_specs = [
        SyntheticFamilySpec(
            family_label=f"known-{i + 1:02d}",
            prototype=known_protos[i],
            dimension=dim,
            flip_rate=DEFAULT_FLIP_RATE,
            sample_count=DEFAULT_SAMPLES_PER_FAMILY,
            date_start=DEFAULT_KNOWN_RANGE[0],
            date_end=DEFAULT_KNOWN_RANGE[1],
        )
        for i in range(DEFAULT_KNOWN_FAMILIES)
    ]
    novel_specs = [
        SyntheticFamilySpec(
            family_label=f"novel-{i + 1:02d}",
            prototype=novel_protos[i],
            dimension=dim,
            flip_rate=DEFAULT_FLIP_RATE,
            sample_count=DEFAULT_SAMPLES_PER_FAMILY,
            date_start=DEFAULT_NOVEL_RANGE[0],
            date_end=DEFAULT_NOVEL_RANGE[1],
        )
        for i in range(DEFAULT_NOVEL_FAMILIES)
    ]
    network = NetworkConfig(
        layer_widths=[dim, 100, 100, 30, DEFAULT_KNOWN_FAMILIES],
        epochs=epochs,
        seed=seed,
    )
    return ExperimentConfig(
        known_family_specs=known_specs,
        novel_family_specs=novel_specs,
        cutoff_date=DEFAULT_CUTOFF,
        network=network,
        seed=seed,
        ablation_relu=ablation_relu,
    )


# ---------------------------------------------------------------------------
# Config JSON round trip
# ---------------------------------------------------------------------------

def _spec_to_dict(spec: SyntheticFamilySpec) -> dict:
    return {
        "family_label": spec.family_label,
        "prototype": list(spec.prototype),
        "dimension": spec.dimension,
        "flip_rate": spec.flip_rate,
        "sample_count": spec.sample_count,
        "date_start": spec.date_start.isoformat(),
        "date_end": spec.date_end.isoformat(),
    }


def _spec_from_dict(d: dict) -> SyntheticFamilySpec:
    return SyntheticFamilySpec(
        family_label=str(d["family_label"]),
        prototype=tuple(int(i) for i in d["prototype"]),
        dimension=int(d["dimension"]),
        flip_rate=float(d["flip_rate"]),
        sample_count=int(d["sample_count"]),
        date_start=date.fromisoformat(d["date_start"]),
        date_end=date.fromisoformat(d["date_end"]),
    )


def config_to_json(cfg: ExperimentConfig) -> str:
    doc = {
        "known_family_specs": [_spec_to_dict(s) for s in cfg.known_family_specs],
        "novel_family_specs": [_spec_to_dict(s) for s in cfg.novel_family_specs],
        "cutoff_date": cfg.cutoff_date.isoformat(),
        "network": {
            "layer_widths": cfg.network.layer_widths,
            "dropout_rate": cfg.network.dropout_rate,
            "input_noise_rate": cfg.network.input_noise_rate,
            "bn_momentum": cfg.network.bn_momentum,
            "bn_epsilon": cfg.network.bn_epsilon,
            "learning_rate": cfg.network.learning_rate,
            "batch_size": cfg.network.batch_size,
            "epochs": cfg.network.epochs,
            "validation_fraction": cfg.network.validation_fraction,
            "seed": cfg.network.seed,
            "freeze_prelu_alpha": cfg.network.freeze_prelu_alpha,
        },
        "seed": cfg.seed,
        "train_viz_model": cfg.train_viz_model,
        "ablation_relu": cfg.ablation_relu,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def config_from_json(text: str) -> ExperimentConfig:
    doc = json.loads(text)
    cfg = ExperimentConfig(
        known_family_specs=[_spec_from_dict(d) for d in doc["known_family_specs"]],
        novel_family_specs=[_spec_from_dict(d) for d in doc["novel_family_specs"]],
        cutoff_date=date.fromisoformat(doc["cutoff_date"]),
        network=NetworkConfig(**doc["network"]),
        seed=int(doc["seed"]),
        train_viz_model=bool(doc.get("train_viz_model", True)),
        ablation_relu=bool(doc.get("ablation_relu", False)),
    )
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    test_accuracy: float
    confusion: np.ndarray
    stats_known: FamilyStats
    stats_novel: FamilyStats
    roc: RocCurve
    calibration: NoveltyCalibration
    eval_tpr: float
    eval_fpr: float
    eval_accuracy: float
    train_report: TrainReport
    ablation: dict | None
    files: dict[str, str]


@contextmanager
def _stage(name: str):
    try:
        yield
    except ValueError as e:
        raise type(e)(f"[stage: {name}] {e}") from e


def _halves(n: int, rng: RngStream):
    """Disjoint calibration/evaluation index split (calibration gets the ceil)."""
    order = rng.permutation(n)
    k = math.ceil(n / 2)
    return np.sort(order[:k]), np.sort(order[k:])


def _records(samples) -> list[VectorRecord]:
    return [
        VectorRecord(s.sample_id, s.family_label, s.first_seen, s.vector)
        for s in samples
    ]


def run_experiment(cfg: ExperimentConfig, out_dir) -> ExperimentResult:
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    files: dict[str, str] = {}

    def emit(name: str, writer, *args) -> str:
        path = os.path.join(out_dir, name)
        writer(*args, path)
        files[name] = path
        return path

    with _stage("generate"):
        known_samples = []
        for spec in cfg.known_family_specs:
            known_samples.extend(
                generate_family(spec, RngStream(cfg.seed, f"family:{spec.family_label}"))
            )
        novel_samples = []
        for spec in cfg.novel_family_specs:
            novel_samples.extend(
                generate_family(spec, RngStream(cfg.seed, f"family:{spec.family_label}"))
            )
        emit("dataset.tsv", write_vector_file, _records(known_samples + novel_samples))

    with _stage("temporal-split"):
        known_train, known_test = temporal_split(known_samples, cfg.cutoff_date)
        train_ds = LabeledDataset.from_samples(known_train)
        test_ds = LabeledDataset.from_samples(known_test)

    with _stage("train-classifier"):
        model = build_model(cfg.network)
        trained, report = train(model, train_ds)
        files["model.json"] = os.path.join(out_dir, "model.json")
        fileio.write_bytes(files["model.json"], save_model(trained))
        emit("training_report.csv", write_train_report, report)

    with _stage("evaluate-classifier"):
        test_accuracy, confusion = evaluate(trained, test_ds)

    with _stage("signatures"):
        sm = strip_softmax(trained)
        sigs_known = signature_batch(
            sm,
            [s.vector for s in known_test],
            sample_ids=[s.sample_id for s in known_test],
            labels=[s.family_label for s in known_test],
        )
        sigs_novel = signature_batch(
            sm,
            [s.vector for s in novel_samples],
            sample_ids=[s.sample_id for s in novel_samples],
            labels=[s.family_label for s in novel_samples],
        )
        emit("signatures_known.csv", write_signature_csv, sigs_known)
        emit("signatures_novel.csv", write_signature_csv, sigs_novel)
        stats_known = family_stats(sigs_known)
        stats_novel = family_stats(sigs_novel)
        emit("family_stats_known.csv", write_stats_csv, stats_known)
        emit("family_stats_novel.csv", write_stats_csv, stats_novel)

    with _stage("calibrate"):
        d_known = np.array([distance_from_origin(s) for s in sigs_known])
        d_novel = np.array([distance_from_origin(s) for s in sigs_novel])
        split_rng = RngStream(cfg.seed, "calibration-split")
        k_cal, k_eval = _halves(len(d_known), split_rng)
        n_cal, n_eval = _halves(len(d_novel), split_rng)
        roc = roc_curve(d_known[k_cal], d_novel[n_cal])
        calibration = calibrate_threshold(roc)
        emit("roc.csv", write_roc_csv, roc)
        emit("calibration.json", write_calibration_json, calibration)
        t = calibration.threshold
        eval_tpr = float(np.mean(d_novel[n_eval] < t)) if len(n_eval) else float("nan")
        eval_fpr = float(np.mean(d_known[k_eval] < t)) if len(k_eval) else float("nan")
        n_correct = int(np.count_nonzero(d_novel[n_eval] < t)) + int(
            np.count_nonzero(d_known[k_eval] >= t)
        )
        denom = len(n_eval) + len(k_eval)
        eval_accuracy = n_correct / denom if denom else float("nan")

    viz_trained = None
    if cfg.train_viz_model:
        with _stage("viz-model"):
            viz_widths = cfg.network.layer_widths[:-2] + [2, cfg.network.layer_widths[-1]]
            viz_cfg = replace(cfg.network, layer_widths=viz_widths)
            viz_trained, viz_report = train(build_model(viz_cfg), train_ds)
            files["model2d.json"] = os.path.join(out_dir, "model2d.json")
            fileio.write_bytes(files["model2d.json"], save_model(viz_trained))
            emit("training_report_2d.csv", write_train_report, viz_report)
            viz_sm = strip_softmax(viz_trained)
            pts = plotting.points_from_signatures(
                signature_batch(
                    viz_sm,
                    [s.vector for s in known_test],
                    sample_ids=[s.sample_id for s in known_test],
                    labels=[s.family_label for s in known_test],
                ),
                is_novel=False,
            ) + plotting.points_from_signatures(
                signature_batch(
                    viz_sm,
                    [s.vector for s in novel_samples],
                    sample_ids=[s.sample_id for s in novel_samples],
                    labels=[s.family_label for s in novel_samples],
                ),
                is_novel=True,
            )
            files["scatter2d.csv"] = os.path.join(out_dir, "scatter2d.csv")
            files["scatter2d.svg"] = os.path.join(out_dir, "scatter2d.svg")
            plotting.write_scatter_files(
                pts, csv_path=files["scatter2d.csv"], svg_path=files["scatter2d.svg"]
            )

    ablation = None
    if cfg.ablation_relu:
        with _stage("relu-ablation"):
            relu_cfg = replace(cfg.network, freeze_prelu_alpha=True)
            relu_trained, _ = train(build_model(relu_cfg), train_ds)
            relu_accuracy, _ = evaluate(relu_trained, test_ds)
            ablation = {
                "prelu_test_accuracy": test_accuracy,
                "relu_test_accuracy": relu_accuracy,
            }

    with _stage("figures"):
        files["roc.png"] = os.path.join(out_dir, "roc.png")
        plotting.render_roc_png(roc, calibration, files["roc.png"])
        files["family_distances.png"] = os.path.join(out_dir, "family_distances.png")
        plotting.render_family_distances_png(
            stats_known, stats_novel, calibration.threshold, files["family_distances.png"]
        )
        if report.epochs:
            files["training_curves.png"] = os.path.join(out_dir, "training_curves.png")
            plotting.render_training_curves_png(report.epochs, files["training_curves.png"])
        if viz_trained is not None:
            files["scatter2d.png"] = os.path.join(out_dir, "scatter2d.png")
            plotting.render_scatter_png(pts, files["scatter2d.png"])

    with _stage("summary"):
        final_val = report.epochs[-1].val_acc if report.epochs else None
        summary = {
            "seed": cfg.seed,
            "cutoff_date": cfg.cutoff_date.isoformat(),
            "dimension": cfg.network.layer_widths[0],
            "known_families": [s.family_label for s in cfg.known_family_specs],
            "novel_families": [s.family_label for s in cfg.novel_family_specs],
            "counts": {
                "known_train": len(known_train),
                "known_test": len(known_test),
                "novel": len(novel_samples),
            },
            "classifier": {
                "test_accuracy": test_accuracy,
                "final_validation_accuracy": None if final_val is None or np.isnan(final_val) else final_val,
                "epochs": cfg.network.epochs,
                "underflow_clamps": report.underflow_clamps,
            },
            "novelty": {
                "auc": roc.auc,
                "threshold": calibration.threshold,
                "calibration": {
                    "tpr": calibration.tpr_at_threshold,
                    "fpr": calibration.fpr_at_threshold,
                    "accuracy": calibration.accuracy_at_threshold,
                    "known": int(len(k_cal)),
                    "novel": int(len(n_cal)),
                },
                "evaluation": {
                    "tpr": eval_tpr,
                    "fpr": eval_fpr,
                    "accuracy": eval_accuracy,
                    "known": int(len(k_eval)),
                    "novel": int(len(n_eval)),
                },
            },
            "family_mean_distance": {
                "known": {r.family: r.mean_distance for r in stats_known.rows},
                "novel": {r.family: r.mean_distance for r in stats_novel.rows},
            },
            "ablation": ablation,
            "files": sorted(files),
        }
        files["summary.json"] = os.path.join(out_dir, "summary.json")
        fileio.write_text(
            files["summary.json"], json.dumps(summary, indent=2, sort_keys=True) + "\n"
        )
        files["experiment_config.json"] = os.path.join(out_dir, "experiment_config.json")
        fileio.write_text(files["experiment_config.json"], config_to_json(cfg))

    return ExperimentResult(
        test_accuracy=test_accuracy,
        confusion=confusion,
        stats_known=stats_known,
        stats_novel=stats_novel,
        roc=roc,
        calibration=calibration,
        eval_tpr=eval_tpr,
        eval_fpr=eval_fpr,
        eval_accuracy=eval_accuracy,
        train_report=report,
        ablation=ablation,
        files=files,
    )
