"""Multiclass family classifier assembled from the dense primitives.

The network is a stack of hidden blocks (dense -> batch norm -> PReLU ->
dropout) followed by a dense softmax head. Training-time input is perturbed
by Boolean input noise and input dropout before the first dense layer.
Training is fully seeded: same config + data + seed reproduces the final
parameters bit for bit.
"""

from __future__ import annotations

import copy
import json
import time
import warnings
import zlib
from dataclasses import dataclass, field, asdict
from datetime import date

import numpy as np

from . import fileio, nn
from .errors import (
    ChecksumError,
    ConfigError,
    DataError,
    DimensionError,
    ShapeError,
    TruncatedError,
    VersionError,
)
from .rng import RngStream
from .vectorizer import FeatureVector, VectorRecord, densify_batch

FORMAT_VERSION = 1

# Reference architecture at full corpus scale, and the desk-scale variant
# that preserves the block structure at a size a laptop can train.
FULL_SCALE_WIDTHS = [20_000, 5_000, 1_000, 1_000, 1_000, 1_000, 100, 30, 14]
DESK_SCALE_WIDTHS = [2_000, 500, 100, 100, 30]  # + class count appended


@dataclass
class NetworkConfig:
    """Widths plus every training hyperparameter.

    layer_widths runs input first, class count last; everything between is a
    hidden block. freeze_prelu_alpha pins the activation slopes at zero,
    turning every PReLU into a plain ReLU (used by the ablation harness).
    """

    layer_widths: list[int]
    dropout_rate: float = 0.4
    input_noise_rate: float = 0.4
    bn_momentum: float = 0.99
    bn_epsilon: float = 1e-5
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    validation_fraction: float = 0.10
    seed: int = 0
    freeze_prelu_alpha: bool = False

    def validate(self) -> None:
        w = self.layer_widths
        if len(w) < 3:
            raise ConfigError("layer_widths: need at least 3 widths (in, hidden, classes)")
        if any(int(v) != v or v < 1 for v in w):
            raise ConfigError(f"layer_widths: all widths must be integers >= 1, got {w}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate: must be in [0, 1), got {self.dropout_rate}")
        if not 0.0 <= self.input_noise_rate < 1.0:
            raise ConfigError(
                f"input_noise_rate: must be in [0, 1), got {self.input_noise_rate}"
            )
        if not 0.0 <= self.bn_momentum < 1.0:
            raise ConfigError(f"bn_momentum: must be in [0, 1), got {self.bn_momentum}")
        if self.bn_epsilon <= 0.0:
            raise ConfigError(f"bn_epsilon: must be > 0, got {self.bn_epsilon}")
        if self.learning_rate <= 0.0:
            raise ConfigError(f"learning_rate: must be > 0, got {self.learning_rate}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size: must be >= 2, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs: must be >= 0, got {self.epochs}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError(
                f"validation_fraction: must be in (0, 1), got {self.validation_fraction}"
            )


def full_scale_config(classes: int = 14, **overrides) -> NetworkConfig:
    widths = FULL_SCALE_WIDTHS[:-1] + [classes]
    defaults = dict(layer_widths=widths, epochs=1000)
    defaults.update(overrides)
    return NetworkConfig(**defaults)


def desk_config(classes: int, input_width: int = 2_000, **overrides) -> NetworkConfig:
    widths = [input_width] + DESK_SCALE_WIDTHS[1:] + [classes]
    defaults = dict(layer_widths=widths, epochs=100)
    defaults.update(overrides)
    return NetworkConfig(**defaults)


@dataclass
class HiddenBlock:
    dense: nn.DenseParams
    bn: nn.BatchNormState
    prelu: nn.PReLUParams


@dataclass
class NetworkModel:
    config: NetworkConfig
    blocks: list[HiddenBlock]
    head: nn.DenseParams
    label_index: list[str] | None = None
    frozen: bool = False

    @property
    def input_dim(self) -> int:
        return self.config.layer_widths[0]

    @property
    def num_classes(self) -> int:
        return self.config.layer_widths[-1]

    @property
    def last_hidden_dim(self) -> int:
        return self.config.layer_widths[-2]


@dataclass(frozen=True)
class LabeledSample:
    sample_id: str
    vector: FeatureVector
    family_label: str
    first_seen: date


@dataclass
class LabeledDataset:
    samples: list[LabeledSample]
    label_index: list[str]

    @classmethod
    def from_samples(cls, samples: list[LabeledSample]) -> "LabeledDataset":
        if not samples:
            raise DataError("empty dataset")
        dims = {s.vector.dimension for s in samples}
        if len(dims) != 1:
            raise DimensionError(f"samples carry mixed vector dimensions: {sorted(dims)}")
        ids = [s.sample_id for s in samples]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate sample_ids in dataset")
        labels = sorted({s.family_label for s in samples})
        return cls(samples=samples, label_index=labels)

    @classmethod
    def from_records(cls, records: list[VectorRecord]) -> "LabeledDataset":
        return cls.from_samples(
            [
                LabeledSample(r.sample_id, r.vector, r.family_label, r.first_seen)
                for r in records
            ]
        )

    @property
    def dimension(self) -> int:
        return self.samples[0].vector.dimension

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    seconds: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    underflow_clamps: int = 0


def write_train_report(report: TrainReport, path) -> None:
    lines = ["epoch,train_loss,train_acc,val_loss,val_acc,seconds"]
    for e in report.epochs:
        lines.append(
            f"{e.epoch},{e.train_loss!r},{e.train_acc!r},"
            f"{e.val_loss!r},{e.val_acc!r},{e.seconds!r}"
        )
    fileio.write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def build_model(config: NetworkConfig) -> NetworkModel:
    """Initialize all parameters from config.seed; deterministic."""
    config.validate()
    init = RngStream(config.seed, "init")
    widths = config.layer_widths
    blocks = []
    for i in range(len(widths) - 2):
        blocks.append(
            HiddenBlock(
                dense=nn.init_dense(widths[i], widths[i + 1], init),
                bn=nn.init_batchnorm(
                    widths[i + 1], momentum=config.bn_momentum, epsilon=config.bn_epsilon
                ),
                prelu=nn.init_prelu(widths[i + 1]),
            )
        )
    # zero-init head: logits start at zero, so the first loss is exactly
    # ln(classes) and predictions start uniform; hidden layers still get
    # He-scaled draws above
    head = nn.DenseParams(
        weights=np.zeros((widths[-2], widths[-1]), dtype=np.float64),
        bias=np.zeros(widths[-1], dtype=np.float64),
    )
    return NetworkModel(config=config, blocks=blocks, head=head)


# ---------------------------------------------------------------------------
# Inference forward (shared with the signature generator)
# ---------------------------------------------------------------------------

def hidden_forward_infer(blocks: list[HiddenBlock], x: np.ndarray) -> np.ndarray:
    """Forward through the hidden stack with moving statistics, no randomness."""
    h = x
    for blk in blocks:
        h = nn.dense_forward(h, blk.dense)
        h = nn.batchnorm_forward_infer(h, blk.bn)
        h = nn.prelu_forward(h, blk.prelu)
    return h


def _infer_probs(model: NetworkModel, x: np.ndarray) -> np.ndarray:
    h = hidden_forward_infer(model.blocks, x)
    return nn.softmax(nn.dense_forward(h, model.head))


def predict(model: NetworkModel, v: FeatureVector) -> np.ndarray:
    """Class probability vector for one feature vector (inference mode)."""
    if not model.frozen:
        raise ConfigError("predict requires a frozen (trained or loaded) model")
    if v.dimension != model.input_dim:
        raise DimensionError(
            f"vector dimension {v.dimension} != model input width {model.input_dim}"
        )
    x = v.densify().reshape(1, -1)
    return _infer_probs(model, x)[0]


def predict_batch(model: NetworkModel, vectors: list[FeatureVector]) -> np.ndarray:
    if not model.frozen:
        raise ConfigError("predict requires a frozen (trained or loaded) model")
    x = densify_batch(vectors, model.input_dim)
    return _infer_probs(model, x)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _one_hot(labels: np.ndarray, classes: int) -> np.ndarray:
    y = np.zeros((labels.shape[0], classes), dtype=np.float64)
    y[np.arange(labels.shape[0]), labels] = 1.0
    return y


def _stratified_split(labels: np.ndarray, classes: int, fraction: float, rng: RngStream):
    """Per-class holdout of floor(fraction * n) samples; returns (train, val)."""
    train_idx, val_idx = [], []
    for c in range(classes):
        members = np.flatnonzero(labels == c)
        order = members[rng.permutation(len(members))]
        k = int(fraction * len(members))
        val_idx.extend(order[:k].tolist())
        train_idx.extend(order[k:].tolist())
    return np.array(sorted(train_idx), dtype=np.int64), np.array(sorted(val_idx), dtype=np.int64)


def _flatten_params(blocks: list[HiddenBlock], head: nn.DenseParams) -> list[np.ndarray]:
    flat: list[np.ndarray] = []
    for blk in blocks:
        flat.extend([blk.dense.weights, blk.dense.bias, blk.bn.gamma, blk.bn.beta, blk.prelu.alpha])
    flat.extend([head.weights, head.bias])
    return flat


def _unflatten_params(flat: list[np.ndarray], blocks: list[HiddenBlock], head: nn.DenseParams):
    i = 0
    for blk in blocks:
        blk.dense.weights, blk.dense.bias = flat[i], flat[i + 1]
        blk.bn.gamma, blk.bn.beta = flat[i + 2], flat[i + 3]
        blk.prelu.alpha = flat[i + 4]
        i += 5
    head.weights, head.bias = flat[i], flat[i + 1]


def train(model: NetworkModel, data: LabeledDataset):
    """Train a copy of the model; returns (frozen model, TrainReport).

    The input model is left untouched. Hold-out validation is stratified by
    family. Every random draw (split, per-epoch shuffle, input noise, dropout
    masks) comes from streams derived from config.seed.
    """
    if model.frozen:
        raise ConfigError("model is frozen; build a fresh model to retrain")
    cfg = model.config
    cfg.validate()
    if data.dimension != model.input_dim:
        raise DimensionError(
            f"data dimension {data.dimension} != model input width {model.input_dim}"
        )
    if len(data.label_index) != model.num_classes:
        raise DimensionError(
            f"dataset has {len(data.label_index)} families but model outputs "
            f"{model.num_classes} classes"
        )

    label_to_idx = {lab: i for i, lab in enumerate(data.label_index)}
    labels = np.array([label_to_idx[s.family_label] for s in data.samples], dtype=np.int64)
    counts = np.bincount(labels, minlength=model.num_classes)
    if np.any(counts < 2):
        sparse = [data.label_index[i] for i in np.flatnonzero(counts < 2)]
        warnings.warn(f"families with fewer than 2 samples: {sparse}", stacklevel=2)

    split_rng = RngStream(cfg.seed, "split")
    shuffle_rng = RngStream(cfg.seed, "shuffle")
    noise_rng = RngStream(cfg.seed, "input-noise")
    drop_rng = RngStream(cfg.seed, "dropout")

    train_idx, val_idx = _stratified_split(
        labels, model.num_classes, cfg.validation_fraction, split_rng
    )
    present = np.unique(labels[train_idx])
    if len(present) != model.num_classes:
        missing = [data.label_index[c] for c in range(model.num_classes) if c not in present]
        raise DataError(f"families absent from the training partition: {missing}")

    trained = copy.deepcopy(model)
    blocks, head = trained.blocks, trained.head
    report = TrainReport()
    if cfg.epochs == 0:
        trained.frozen = True
        trained.label_index = list(data.label_index)
        return trained, report

    if len(train_idx) < 2:
        raise DataError("training partition must hold at least 2 samples")

    x_train = densify_batch([data.samples[i].vector for i in train_idx], data.dimension)
    y_train = labels[train_idx]
    x_val = (
        densify_batch([data.samples[i].vector for i in val_idx], data.dimension)
        if len(val_idx)
        else None
    )
    y_val = labels[val_idx] if len(val_idx) else None

    adam = nn.init_adam(_flatten_params(blocks, head), learning_rate=cfg.learning_rate)
    n_train = len(train_idx)

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(n_train)

        # batch boundaries; a trailing batch of 1 is folded into its neighbor
        bounds = list(range(0, n_train, cfg.batch_size)) + [n_train]
        if len(bounds) > 2 and bounds[-1] - bounds[-2] < 2:
            del bounds[-2]

        loss_sum = 0.0
        correct = 0
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx = order[lo:hi]
            xb = x_train[idx]
            yb = _one_hot(y_train[idx], model.num_classes)

            # forward
            h = nn.input_noise(xb, cfg.input_noise_rate, noise_rng, "train")
            h, _ = nn.dropout_train(h, cfg.dropout_rate, drop_rng)
            caches = []
            for blk in blocks:
                x_in = h
                z = nn.dense_forward(h, blk.dense)
                z_bn, blk.bn, bn_cache = nn.batchnorm_forward_train(z, blk.bn)
                a = nn.prelu_forward(z_bn, blk.prelu)
                h, mask = nn.dropout_train(a, cfg.dropout_rate, drop_rng)
                caches.append((x_in, bn_cache, z_bn, mask))
            logits = nn.dense_forward(h, head)
            probs = nn.softmax(logits)
            loss, grad, clamped = nn.cross_entropy(probs, yb)
            report.underflow_clamps += clamped
            loss_sum += loss * len(idx)
            correct += int(np.count_nonzero(probs.argmax(axis=1) == y_train[idx]))

            # backward
            grads: list[np.ndarray | None] = [None] * (5 * len(blocks) + 2)
            grad_h, grads[-2], grads[-1] = nn.dense_backward(h, head, grad)
            keep = 1.0 - cfg.dropout_rate
            for bi in range(len(blocks) - 1, -1, -1):
                x_in, bn_cache, z_bn, mask = caches[bi]
                blk = blocks[bi]
                grad_a = grad_h * mask / keep
                grad_zbn, g_alpha = nn.prelu_backward(z_bn, blk.prelu, grad_a)
                grad_z, g_gamma, g_beta = nn.batchnorm_backward(bn_cache, grad_zbn)
                grad_h, g_w, g_b = nn.dense_backward(x_in, blk.dense, grad_z)
                if cfg.freeze_prelu_alpha:
                    g_alpha = np.zeros_like(g_alpha)
                grads[5 * bi : 5 * bi + 5] = [g_w, g_b, g_gamma, g_beta, g_alpha]

            new_params, adam = nn.adam_step(_flatten_params(blocks, head), grads, adam)
            _unflatten_params(new_params, blocks, head)

        if x_val is not None:
            val_probs = _infer_probs(trained, x_val)
            val_loss, _, _ = nn.cross_entropy(val_probs, _one_hot(y_val, model.num_classes))
            val_acc = float(np.mean(val_probs.argmax(axis=1) == y_val))
        else:
            val_loss, val_acc = float("nan"), float("nan")

        report.epochs.append(
            EpochStats(
                epoch=epoch,
                train_loss=loss_sum / n_train,
                train_acc=correct / n_train,
                val_loss=val_loss,
                val_acc=val_acc,
                seconds=time.perf_counter() - t0,
            )
        )

    trained.frozen = True
    trained.label_index = list(data.label_index)
    return trained, report


def evaluate(model: NetworkModel, data: LabeledDataset):
    """Accuracy and confusion counts (rows true, columns predicted)."""
    if not model.frozen:
        raise ConfigError("evaluate requires a frozen model")
    if model.label_index is None:
        raise ConfigError("model carries no label index; train or load one first")
    if len(data) == 0:
        raise DataError("empty dataset")
    unknown = sorted(set(data.label_index) - set(model.label_index))
    if unknown:
        raise DataError(f"labels outside the model's label index: {unknown}")
    label_to_idx = {lab: i for i, lab in enumerate(model.label_index)}
    c = len(model.label_index)
    confusion = np.zeros((c, c), dtype=np.int64)
    chunk = 1024
    for lo in range(0, len(data), chunk):
        part = data.samples[lo : lo + chunk]
        probs = predict_batch(model, [s.vector for s in part])
        pred = probs.argmax(axis=1)
        for s, p in zip(part, pred):
            confusion[label_to_idx[s.family_label], p] += 1
    accuracy = float(np.trace(confusion) / len(data))
    return accuracy, confusion


# ---------------------------------------------------------------------------
# Serialization: versioned JSON with a CRC-32 over the parameter section
# ---------------------------------------------------------------------------

def _canonical_json(obj) -> str:
    """Compact deterministic JSON; floats as 17-significant-digit numerals."""
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not np.isfinite(v):
            raise DataError(f"cannot serialize non-finite value {v}")
        return format(v, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_canonical_json(v) for v in obj) + "]"
    if isinstance(obj, dict):
        items = sorted(obj.items())
        return "{" + ",".join(f"{json.dumps(k)}:{_canonical_json(v)}" for k, v in items) + "}"
    raise DataError(f"cannot serialize {type(obj).__name__}")


def _parameters_dict(model: NetworkModel) -> dict:
    return {
        "blocks": [
            {
                "weights": blk.dense.weights.tolist(),
                "bias": blk.dense.bias.tolist(),
                "gamma": blk.bn.gamma.tolist(),
                "beta": blk.bn.beta.tolist(),
                "moving_mean": blk.bn.moving_mean.tolist(),
                "moving_var": blk.bn.moving_var.tolist(),
                "alpha": blk.prelu.alpha.tolist(),
            }
            for blk in model.blocks
        ],
        "head": {
            "weights": model.head.weights.tolist(),
            "bias": model.head.bias.tolist(),
        },
    }


def save_model(model: NetworkModel) -> bytes:
    """Serialize a frozen model to a versioned JSON document."""
    if not model.frozen:
        raise ConfigError("only frozen models can be saved")
    params = _parameters_dict(model)
    crc = zlib.crc32(_canonical_json(params).encode("utf-8"))
    widths = model.config.layer_widths
    doc = {
        "format_version": FORMAT_VERSION,
        "config": asdict(model.config),
        "label_index": model.label_index,
        "layers": [
            {"kind": "hidden" if i < len(widths) - 2 else "head",
             "in": widths[i], "out": widths[i + 1]}
            for i in range(len(widths) - 1)
        ],
        "parameters": params,
        "parameter_crc32": crc,
    }
    return _canonical_json(doc).encode("utf-8")


def _array(values, shape: tuple, what: str) -> np.ndarray:
    a = np.asarray(values, dtype=np.float64)
    if a.shape != shape:
        raise ShapeError(f"{what}: expected shape {shape}, found {a.shape}")
    return a


def load_model(data: bytes) -> NetworkModel:
    """Parse, checksum-verify, and shape-check a saved model document."""
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise TruncatedError(f"model document is truncated or unparseable: {e}") from e
    if not isinstance(doc, dict):
        raise TruncatedError("model document is not a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported format_version {version!r}, expected {FORMAT_VERSION}")
    for key in ("config", "layers", "parameters", "parameter_crc32"):
        if key not in doc:
            raise TruncatedError(f"model document missing field {key!r}")

    crc = zlib.crc32(_canonical_json(doc["parameters"]).encode("utf-8"))
    if crc != doc["parameter_crc32"]:
        raise ChecksumError(
            f"parameter checksum mismatch: stored {doc['parameter_crc32']}, computed {crc}"
        )

    try:
        config = NetworkConfig(**doc["config"])
    except TypeError as e:
        raise TruncatedError(f"bad config section: {e}") from e
    config.validate()
    widths = config.layer_widths
    params = doc["parameters"]
    if len(params.get("blocks", [])) != len(widths) - 2:
        raise ShapeError(
            f"expected {len(widths) - 2} hidden blocks, found {len(params.get('blocks', []))}"
        )

    blocks = []
    for i, raw in enumerate(params["blocks"]):
        w_in, w_out = widths[i], widths[i + 1]
        blocks.append(
            HiddenBlock(
                dense=nn.DenseParams(
                    weights=_array(raw["weights"], (w_in, w_out), f"block {i} weights"),
                    bias=_array(raw["bias"], (w_out,), f"block {i} bias"),
                ),
                bn=nn.BatchNormState(
                    gamma=_array(raw["gamma"], (w_out,), f"block {i} gamma"),
                    beta=_array(raw["beta"], (w_out,), f"block {i} beta"),
                    moving_mean=_array(raw["moving_mean"], (w_out,), f"block {i} moving_mean"),
                    moving_var=_array(raw["moving_var"], (w_out,), f"block {i} moving_var"),
                    momentum=config.bn_momentum,
                    epsilon=config.bn_epsilon,
                ),
                prelu=nn.PReLUParams(
                    alpha=_array(raw["alpha"], (w_out,), f"block {i} alpha")
                ),
            )
        )
    head = nn.DenseParams(
        weights=_array(params["head"]["weights"], (widths[-2], widths[-1]), "head weights"),
        bias=_array(params["head"]["bias"], (widths[-1],), "head bias"),
    )
    label_index = doc.get("label_index")
    if label_index is not None:
        label_index = [str(x) for x in label_index]
        if len(label_index) != widths[-1]:
            raise ShapeError(
                f"label_index holds {len(label_index)} labels for {widths[-1]} classes"
            )
    return NetworkModel(config=config, blocks=blocks, head=head,
                        label_index=label_index, frozen=True)
