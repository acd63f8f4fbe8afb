"""Dense network primitives: forward/backward passes, loss, and Adam.

All arithmetic is 64-bit numpy. Matrices are (batch, features) row-major
ndarrays. Backward passes are hand-derived and checked against central finite
differences in the test suite; nothing here depends on a deep-learning
framework.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError, DimensionError
from .rng import RngStream


def _as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------

@dataclass
class DenseParams:
    """Fully connected layer: weights (in_dim, out_dim) and bias (out_dim,)."""

    weights: np.ndarray
    bias: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]


@dataclass
class PReLUParams:
    """Per-unit negative-side slopes, initialized to zeros (pure ReLU start)."""

    alpha: np.ndarray


@dataclass
class BatchNormState:
    """Per-feature affine scale/shift plus exponentially averaged statistics.

    Moving statistics default to ones for both mean and variance; zero would
    be the textbook choice for the mean, but the training recipe this package
    reproduces starts both at one, so that is the default and it stays
    configurable through init_batchnorm.
    """

    gamma: np.ndarray
    beta: np.ndarray
    moving_mean: np.ndarray
    moving_var: np.ndarray
    momentum: float = 0.99
    epsilon: float = 1e-5


@dataclass
class DropoutSpec:
    rate: float = 0.4

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {self.rate}")


@dataclass
class AdamState:
    """Adam accumulators for a flat list of parameter arrays."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_dense(in_dim: int, out_dim: int, rng: RngStream) -> DenseParams:
    """He-style init: N(0, 2/fan_in) weights, zero bias."""
    scale = np.sqrt(2.0 / in_dim)
    return DenseParams(
        weights=rng.normal((in_dim, out_dim), scale=scale),
        bias=np.zeros(out_dim, dtype=np.float64),
    )


def init_prelu(width: int) -> PReLUParams:
    return PReLUParams(alpha=np.zeros(width, dtype=np.float64))


def init_batchnorm(
    width: int,
    momentum: float = 0.99,
    epsilon: float = 1e-5,
    moving_mean_init: float = 1.0,
    moving_var_init: float = 1.0,
) -> BatchNormState:
    if epsilon <= 0:
        raise ConfigError(f"batchnorm epsilon must be > 0, got {epsilon}")
    return BatchNormState(
        gamma=np.ones(width, dtype=np.float64),
        beta=np.zeros(width, dtype=np.float64),
        moving_mean=np.full(width, moving_mean_init, dtype=np.float64),
        moving_var=np.full(width, moving_var_init, dtype=np.float64),
        momentum=momentum,
        epsilon=epsilon,
    )


def init_adam(
    params: list[np.ndarray],
    learning_rate: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> AdamState:
    return AdamState(
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        t=0,
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


# ---------------------------------------------------------------------------
# Dense
# ---------------------------------------------------------------------------

def dense_forward(x: np.ndarray, p: DenseParams) -> np.ndarray:
    x = _as_matrix(x)
    if x.shape[1] != p.in_dim:
        raise DimensionError(
            f"dense expects input width {p.in_dim}, got matrix of shape {x.shape}"
        )
    return x @ p.weights + p.bias


def dense_backward(x: np.ndarray, p: DenseParams, grad_out: np.ndarray):
    """Returns (grad_x, grad_weights, grad_bias)."""
    x = _as_matrix(x)
    grad_out = _as_matrix(grad_out)
    if x.shape[1] != p.in_dim or grad_out.shape != (x.shape[0], p.out_dim):
        raise DimensionError(
            f"dense backward shapes inconsistent: x {x.shape}, "
            f"W {p.weights.shape}, grad_out {grad_out.shape}"
        )
    grad_x = grad_out @ p.weights.T
    grad_w = x.T @ grad_out
    grad_b = grad_out.sum(axis=0)
    return grad_x, grad_w, grad_b


# ---------------------------------------------------------------------------
# PReLU
# ---------------------------------------------------------------------------

def prelu_forward(x: np.ndarray, p: PReLUParams) -> np.ndarray:
    """x for x >= 0, alpha * x for x < 0, slope per column."""
    x = _as_matrix(x)
    if x.shape[1] != p.alpha.shape[0]:
        raise DimensionError(
            f"prelu expects width {p.alpha.shape[0]}, got matrix of shape {x.shape}"
        )
    return np.where(x >= 0.0, x, p.alpha * x)


def prelu_backward(x: np.ndarray, p: PReLUParams, grad_out: np.ndarray):
    """Returns (grad_x, grad_alpha).

    grad_alpha sums grad_out * x over the batch where x < 0 (per column).
    """
    x = _as_matrix(x)
    grad_out = _as_matrix(grad_out)
    if x.shape != grad_out.shape or x.shape[1] != p.alpha.shape[0]:
        raise DimensionError(
            f"prelu backward shapes inconsistent: x {x.shape}, "
            f"alpha {p.alpha.shape}, grad_out {grad_out.shape}"
        )
    negative = x < 0.0
    grad_x = grad_out * np.where(negative, p.alpha, 1.0)
    grad_alpha = np.where(negative, grad_out * x, 0.0).sum(axis=0)
    return grad_x, grad_alpha


# ---------------------------------------------------------------------------
# Batch normalization
# ---------------------------------------------------------------------------

def batchnorm_forward_train(x: np.ndarray, s: BatchNormState):
    """Normalize with batch statistics; returns (out, updated_state, cache).

    Uses biased batch variance. Moving statistics are updated as
    m <- momentum * m + (1 - momentum) * batch_stat. The input state is not
    mutated; a new state is returned.
    """
    x = _as_matrix(x)
    if x.shape[1] != s.gamma.shape[0]:
        raise DimensionError(
            f"batchnorm expects width {s.gamma.shape[0]}, got matrix of shape {x.shape}"
        )
    if x.shape[0] < 2:
        raise DataError("batchnorm requires batch >= 2")
    batch_mean = x.mean(axis=0)
    centered = x - batch_mean
    batch_var = np.mean(centered * centered, axis=0)
    inv_std = 1.0 / np.sqrt(batch_var + s.epsilon)
    x_hat = centered * inv_std
    out = s.gamma * x_hat + s.beta
    updated = replace(
        s,
        moving_mean=s.momentum * s.moving_mean + (1.0 - s.momentum) * batch_mean,
        moving_var=s.momentum * s.moving_var + (1.0 - s.momentum) * batch_var,
    )
    cache = {"x_hat": x_hat, "inv_std": inv_std, "gamma": s.gamma}
    return out, updated, cache


def batchnorm_forward_infer(x: np.ndarray, s: BatchNormState) -> np.ndarray:
    """Normalize with moving statistics; pure and row-independent."""
    x = _as_matrix(x)
    if x.shape[1] != s.gamma.shape[0]:
        raise DimensionError(
            f"batchnorm expects width {s.gamma.shape[0]}, got matrix of shape {x.shape}"
        )
    inv_std = 1.0 / np.sqrt(s.moving_var + s.epsilon)
    return s.gamma * ((x - s.moving_mean) * inv_std) + s.beta


def batchnorm_backward(cache, grad_out: np.ndarray):
    """Gradients through batch mean and variance.

    Returns (grad_x, grad_gamma, grad_beta). Requires the cache from a
    train-mode forward.
    """
    if not isinstance(cache, dict) or "x_hat" not in cache:
        raise DataError("batchnorm backward requires the cache from a train forward")
    grad_out = _as_matrix(grad_out)
    x_hat, inv_std, gamma = cache["x_hat"], cache["inv_std"], cache["gamma"]
    if grad_out.shape != x_hat.shape:
        raise DimensionError(
            f"batchnorm backward shapes inconsistent: cache {x_hat.shape}, "
            f"grad_out {grad_out.shape}"
        )
    n = x_hat.shape[0]
    grad_beta = grad_out.sum(axis=0)
    grad_gamma = (grad_out * x_hat).sum(axis=0)
    grad_x_hat = grad_out * gamma
    # standard closed form with biased variance
    grad_x = (inv_std / n) * (
        n * grad_x_hat
        - grad_x_hat.sum(axis=0)
        - x_hat * (grad_x_hat * x_hat).sum(axis=0)
    )
    return grad_x, grad_gamma, grad_beta


# ---------------------------------------------------------------------------
# Dropout and input noise
# ---------------------------------------------------------------------------

def dropout_train(x: np.ndarray, rate: float, rng: RngStream):
    """Inverted dropout; returns (out, keep_mask). Mask is {0,1} unscaled."""
    x = _as_matrix(x)
    if rate == 0.0:
        return x, np.ones_like(x)
    mask = (rng.uniform(x.shape) >= rate).astype(np.float64)
    return x * mask / (1.0 - rate), mask


def dropout_apply(x: np.ndarray, spec: DropoutSpec, rng: RngStream, mode: str) -> np.ndarray:
    """Train mode: keep each element with p=1-rate and rescale by 1/(1-rate).

    Infer mode is the identity, so inference needs no compensation.
    """
    if mode not in ("train", "infer"):
        raise ConfigError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = _as_matrix(x)
    if mode == "infer" or spec.rate == 0.0:
        return x
    out, _ = dropout_train(x, spec.rate, rng)
    return out


def input_noise(x: np.ndarray, rate: float, rng: RngStream, mode: str) -> np.ndarray:
    """Randomly clear set bits of a Boolean matrix; never rescales.

    Zero bits pass through untouched, so the output stays Boolean.
    """
    if mode not in ("train", "infer"):
        raise ConfigError(f"mode must be 'train' or 'infer', got {mode!r}")
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"input noise rate must be in [0, 1), got {rate}")
    x = _as_matrix(x)
    if not np.all((x == 0.0) | (x == 1.0)):
        raise DataError("input noise requires a {0,1} matrix")
    if mode == "infer" or rate == 0.0:
        return x
    keep = (rng.uniform(x.shape) >= rate).astype(np.float64)
    return x * keep


# ---------------------------------------------------------------------------
# Softmax + categorical cross-entropy
# ---------------------------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for overflow safety."""
    logits = _as_matrix(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


UNDERFLOW_FLOOR = 1e-12


def cross_entropy(probabilities: np.ndarray, labels: np.ndarray):
    """Mean categorical cross-entropy against one-hot labels.

    Returns (loss, grad_logits, clamped) where grad_logits is the fused
    gradient (p - y) / batch of softmax followed by this loss, and clamped
    counts rows whose true-class probability hit the underflow floor.
    """
    p = _as_matrix(probabilities)
    y = _as_matrix(labels)
    if p.shape != y.shape:
        raise DimensionError(
            f"probabilities {p.shape} and labels {y.shape} disagree"
        )
    n = p.shape[0]
    p_true = (p * y).sum(axis=1)
    clamped = int(np.count_nonzero(p_true < UNDERFLOW_FLOOR))
    loss = float(-np.log(np.maximum(p_true, UNDERFLOW_FLOOR)).mean())
    grad_logits = (p - y) / n
    return loss, grad_logits, clamped


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState):
    """One Adam update over a flat list of parameter arrays.

    m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2;  bias-corrected m_hat,
    v_hat;  p <- p - lr * m_hat / (sqrt(v_hat) + eps). Returns
    (new_params, new_state); inputs are left untouched.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError(
            f"adam_step got {len(params)} params, {len(grads)} grads, "
            f"state over {len(state.m)}"
        )
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise DimensionError(
                f"adam_step shape mismatch: param {p.shape}, grad {g.shape}, "
                f"moment {m.shape}"
            )
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    new_m, new_v, new_params = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m2 = b1 * m + (1.0 - b1) * g
        v2 = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m2 / bc1
        v_hat = v2 / bc2
        new_params.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
        new_m.append(m2)
        new_v.append(v2)
    new_state = AdamState(
        m=new_m,
        v=new_v,
        t=t,
        learning_rate=state.learning_rate,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
    )
    return new_params, new_state
