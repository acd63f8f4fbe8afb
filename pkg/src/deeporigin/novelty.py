"""File signatures and origin-distance novelty scoring.

Dropping the trained classifier's softmax head leaves the hidden stack as a
signature generator: the last hidden layer's activations are the file
signature. Samples from families the classifier never saw produce signatures
near the origin, so Euclidean distance from the origin acts as a continuous
novelty score, thresholded via a ROC sweep.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import fileio
from .classifier import NetworkModel, hidden_forward_infer
from .errors import ConfigError, DataError, DimensionError
from .vectorizer import FeatureVector, densify_batch


@dataclass
class SignatureModel:
    """The frozen hidden stack of a classifier, head removed. Inference only."""

    blocks: list
    input_dim: int
    signature_dim: int


@dataclass(frozen=True)
class Signature:
    values: np.ndarray
    sample_id: str = ""
    family_label: str | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise DimensionError(f"signature must be 1-D, got shape {v.shape}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class FamilyRow:
    family: str
    mean_distance: float
    std_distance: float
    count: int


@dataclass(frozen=True)
class FamilyStats:
    rows: tuple[FamilyRow, ...]


@dataclass(frozen=True)
class RocCurve:
    """(threshold, TPR, FPR) points, ascending in threshold.

    Positives are novel samples: at threshold T, TPR is the fraction of novel
    distances strictly below T and FPR the fraction of known distances below
    T. n_novel / n_known are kept so an operating point's accuracy can be
    recovered from the curve alone.
    """

    points: tuple[tuple[float, float, float], ...]
    auc: float
    n_novel: int
    n_known: int


@dataclass(frozen=True)
class NoveltyCalibration:
    threshold: float
    tpr_at_threshold: float
    fpr_at_threshold: float
    accuracy_at_threshold: float
    auc: float


@dataclass(frozen=True)
class NoveltyVerdict:
    verdict: str  # "known" | "novel"
    distance: float
    margin: float  # threshold - distance; positive on the novel side
    threshold: float


def strip_softmax(model: NetworkModel) -> SignatureModel:
    """Remove the softmax head; the hidden stack is shared, not copied."""
    if not model.frozen:
        raise ConfigError("strip_softmax requires a frozen model")
    return SignatureModel(
        blocks=model.blocks,
        input_dim=model.input_dim,
        signature_dim=model.last_hidden_dim,
    )


def signature(sm: SignatureModel, v: FeatureVector) -> Signature:
    if v.dimension != sm.input_dim:
        raise DimensionError(
            f"vector dimension {v.dimension} != signature model input {sm.input_dim}"
        )
    x = v.densify().reshape(1, -1)
    return Signature(values=hidden_forward_infer(sm.blocks, x)[0])


def signature_batch(sm: SignatureModel, vectors, sample_ids=None, labels=None) -> list[Signature]:
    """Signatures for many vectors at once (row-independent, so batching is safe)."""
    x = densify_batch(vectors, sm.input_dim)
    out = hidden_forward_infer(sm.blocks, x)
    n = len(vectors)
    sample_ids = sample_ids if sample_ids is not None else [""] * n
    labels = labels if labels is not None else [None] * n
    return [
        Signature(values=out[i], sample_id=sample_ids[i], family_label=labels[i])
        for i in range(n)
    ]


def distance_from_origin(s: Signature) -> float:
    return float(np.sqrt(np.sum(s.values * s.values)))


def family_stats(signatures: list[Signature]) -> FamilyStats:
    """Per-family mean and population std of origin distances, label-sorted."""
    if not signatures:
        raise DataError("family_stats requires at least one signature")
    by_family: dict[str, list[float]] = {}
    for s in signatures:
        if s.family_label is None:
            raise DataError(f"signature {s.sample_id!r} carries no family label")
        by_family.setdefault(s.family_label, []).append(distance_from_origin(s))
    rows = []
    for family in sorted(by_family):
        d = np.array(by_family[family], dtype=np.float64)
        rows.append(
            FamilyRow(
                family=family,
                mean_distance=float(d.mean()),
                std_distance=float(d.std()),  # population std
                count=len(d),
            )
        )
    return FamilyStats(rows=tuple(rows))


# ---------------------------------------------------------------------------
# ROC / threshold calibration
# ---------------------------------------------------------------------------

def roc_curve(known_distances, novel_distances) -> RocCurve:
    """ROC over candidate thresholds with trapezoidal AUC.

    Candidates are the midpoints between consecutive distinct pooled
    distances plus one sentinel below the minimum and one above the maximum,
    which exhausts every achievable (TPR, FPR) pair. The AUC is accumulated
    from integer counts and divided once, so it agrees exactly with the
    pair-counting statistic P(d_novel < d_known) + 0.5 * P(tie).
    """
    known = np.sort(np.asarray(list(known_distances), dtype=np.float64))
    novel = np.sort(np.asarray(list(novel_distances), dtype=np.float64))
    if known.size == 0:
        raise DataError("roc_curve requires at least one known distance")
    if novel.size == 0:
        raise DataError("roc_curve requires at least one novel distance")

    pooled = np.unique(np.concatenate([known, novel]))
    candidates = [float(pooled[0] - 1.0)]
    candidates.extend(((pooled[:-1] + pooled[1:]) / 2.0).tolist())
    candidates.append(float(pooled[-1] + 1.0))

    n, m = novel.size, known.size
    points = []
    auc_num = 0.0
    prev_tp = prev_fp = 0
    for t in candidates:
        tp = int(np.searchsorted(novel, t, side="left"))   # novel strictly below t
        fp = int(np.searchsorted(known, t, side="left"))
        points.append((t, tp / n, fp / m))
        auc_num += 0.5 * (tp + prev_tp) * (fp - prev_fp)
        prev_tp, prev_fp = tp, fp
    auc = auc_num / (n * m)
    return RocCurve(points=tuple(points), auc=auc, n_novel=n, n_known=m)


def calibrate_threshold(roc: RocCurve) -> NoveltyCalibration:
    """Pick the Youden-optimal threshold (max TPR - FPR).

    Ties break toward smaller FPR, then smaller threshold. Accuracy is
    computed at the chosen point over the calibration sets the curve was
    built from.
    """
    best = None
    for t, tpr, fpr in roc.points:
        key = (-(tpr - fpr), fpr, t)
        if best is None or key < best[0]:
            best = (key, t, tpr, fpr)
    _, t, tpr, fpr = best
    correct = tpr * roc.n_novel + (1.0 - fpr) * roc.n_known
    accuracy = correct / (roc.n_novel + roc.n_known)
    return NoveltyCalibration(
        threshold=t,
        tpr_at_threshold=tpr,
        fpr_at_threshold=fpr,
        accuracy_at_threshold=accuracy,
        auc=roc.auc,
    )


def classify_novelty(d: float, cal: NoveltyCalibration) -> NoveltyVerdict:
    """Novel iff distance < threshold; the boundary itself counts as known."""
    if d < 0:
        raise DataError(f"distance must be >= 0, got {d}")
    novel = d < cal.threshold
    return NoveltyVerdict(
        verdict="novel" if novel else "known",
        distance=float(d),
        margin=float(cal.threshold - d),
        threshold=cal.threshold,
    )


def novelty_score(d: float) -> float:
    """The continuous novelty metric: the distance itself (lower = more novel)."""
    if d < 0:
        raise DataError(f"distance must be >= 0, got {d}")
    return float(d)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def _f17(x: float) -> str:
    return format(float(x), ".17g")


def write_signature_csv(signatures: list[Signature], path) -> None:
    """CSV: sample_id,family,distance,s1,...,sk with 17-digit floats."""
    if not signatures:
        raise DataError("no signatures to write")
    k = signatures[0].values.shape[0]
    lines = ["sample_id,family,distance," + ",".join(f"s{i + 1}" for i in range(k))]
    for s in signatures:
        if s.values.shape[0] != k:
            raise DimensionError("signatures of mixed dimensions in one file")
        family = s.family_label if s.family_label is not None else ""
        row = [s.sample_id, family, _f17(distance_from_origin(s))]
        row.extend(_f17(v) for v in s.values)
        lines.append(",".join(row))
    fileio.write_text(path, "\n".join(lines) + "\n")


def read_signature_csv(path) -> list[Signature]:
    with open(path, "r", encoding="utf-8", newline="\n") as f:
        lines = [line.rstrip("\n") for line in f if line.strip() != ""]
    if not lines:
        raise DataError(f"signature file {path} is empty")
    header = lines[0].split(",")
    if header[:3] != ["sample_id", "family", "distance"]:
        raise DataError(f"signature file {path}: unexpected header")
    k = len(header) - 3
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != k + 3:
            raise DataError(f"signature file line {lineno}: expected {k + 3} fields")
        values = np.array([float(p) for p in parts[3:]], dtype=np.float64)
        out.append(
            Signature(
                values=values,
                sample_id=parts[0],
                family_label=parts[1] if parts[1] != "" else None,
            )
        )
    return out


def write_stats_csv(stats: FamilyStats, path) -> None:
    # shortest lossless float rendering keeps rows human-readable
    lines = ["family,mean_distance,std_distance,count"]
    for r in stats.rows:
        lines.append(f"{r.family},{r.mean_distance!r},{r.std_distance!r},{r.count}")
    fileio.write_text(path, "\n".join(lines) + "\n")


def write_roc_csv(roc: RocCurve, path) -> None:
    lines = ["threshold,tpr,fpr"]
    for t, tpr, fpr in roc.points:
        lines.append(f"{_f17(t)},{_f17(tpr)},{_f17(fpr)}")
    fileio.write_text(path, "\n".join(lines) + "\n")


def write_calibration_json(cal: NoveltyCalibration, path) -> None:
    doc = {
        "threshold": cal.threshold,
        "tpr": cal.tpr_at_threshold,
        "fpr": cal.fpr_at_threshold,
        "accuracy": cal.accuracy_at_threshold,
        "auc": cal.auc,
    }
    fileio.write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_calibration_json(path) -> NoveltyCalibration:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    try:
        return NoveltyCalibration(
            threshold=float(doc["threshold"]),
            tpr_at_threshold=float(doc["tpr"]),
            fpr_at_threshold=float(doc["fpr"]),
            accuracy_at_threshold=float(doc["accuracy"]),
            auc=float(doc["auc"]),
        )
    except KeyError as e:
        raise DataError(f"calibration file {path} missing field {e}") from e
