"""Gradient optimizers and linear models trained with them.

Linear and logistic (softmax) models share one parameter layout: a dense
matrix of shape (num_features + 1, num_outputs) whose last row is the bias.
Optimizer steps are pure functions from (config, state, params, grads) to
new (state, params), which keeps training deterministic and easy to test.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import (
    CATEGORICAL,
    REAL,
    CategoricalOutput,
    Dataset,
    Example,
    FeatureDomain,
    Model,
    Output,
    RealOutput,
    Trainer,
    model_provenance,
)
from .errors import NonFiniteGradient, ShapeMismatch, TaskMismatch, UnlabelledExample
from .provenance import PInt, PObj, PStr, object_provenance
from .rng import Xoshiro256StarStar, to_signed64

LOGISTIC = "logistic"
SQUARED = "squared"

LINEAR_TRAINER_CLASS = "pvml.LinearSgdTrainer"
LINEAR_MODEL_CLASS = "pvml.LinearSgdModel"


# ---------------------------------------------------------------------------
# Optimizer configurations and state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sgd:
    lr: float

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")


@dataclass(frozen=True)
class AdaGrad:
    lr: float
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.eps < 0:
            raise ValueError("eps must be >= 0")


@dataclass(frozen=True)
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if not self.eps > 0:
            raise ValueError("eps must be positive")


OptimizerConfig = Sgd | AdaGrad | Adam


@dataclass(frozen=True)
class AdaGradState:
    acc: np.ndarray  # running sum of squared gradients


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int


OptimizerState = AdaGradState | AdamState | None


def init_state(cfg: OptimizerConfig, shape: tuple[int, ...]) -> OptimizerState:
    if isinstance(cfg, AdaGrad):
        return AdaGradState(np.zeros(shape))
    if isinstance(cfg, Adam):
        return AdamState(np.zeros(shape), np.zeros(shape), 0)
    return None


def optimizer_step(
    cfg: OptimizerConfig,
    state: OptimizerState,
    params: np.ndarray,
    grads: np.ndarray,
) -> tuple[OptimizerState, np.ndarray]:
    """One update; returns fresh state and parameters, inputs untouched."""
    if params.shape != grads.shape:
        raise ShapeMismatch(f"params {params.shape} vs grads {grads.shape}")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteGradient("gradient contains NaN or infinite entries")

    if isinstance(cfg, Sgd):
        return None, params - cfg.lr * grads

    if isinstance(cfg, AdaGrad):
        if state is not None and state.acc.shape != params.shape:
            raise ShapeMismatch("optimizer state shape does not match parameters")
        acc = (state.acc if state is not None else np.zeros_like(params)) + grads * grads
        step = np.zeros_like(params)
        nonzero = acc > 0
        step[nonzero] = cfg.lr * grads[nonzero] / (np.sqrt(acc[nonzero]) + cfg.eps)
        return AdaGradState(acc), params - step

    if isinstance(cfg, Adam):
        if state is not None and state.m.shape != params.shape:
            raise ShapeMismatch("optimizer state shape does not match parameters")
        if state is None:
            state = AdamState(np.zeros_like(params), np.zeros_like(params), 0)
        t = state.t + 1
        m = cfg.beta1 * state.m + (1 - cfg.beta1) * grads
        v = cfg.beta2 * state.v + (1 - cfg.beta2) * grads * grads
        m_hat = m / (1 - cfg.beta1 ** t)
        v_hat = v / (1 - cfg.beta2 ** t)
        return AdamState(m, v, t), params - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)

    raise TypeError(f"unknown optimizer config {type(cfg).__name__}")


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------

def _design_matrix(examples: Sequence[Example], domain: FeatureDomain) -> np.ndarray:
    """Dense (batch, features + 1) matrix with a trailing bias column of ones."""
    x = np.zeros((len(examples), len(domain) + 1))
    x[:, -1] = 1.0
    for i, ex in enumerate(examples):
        for f in ex.features:
            fid = domain.id_of(f.name)
            if fid is not None:
                x[i, fid] = f.value
    return x


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def logistic_objective(
    params: np.ndarray,
    examples: Sequence[Example],
    domain: FeatureDomain,
    labels: Sequence[str],
) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy loss and its exact gradient.

    Loss is the mean over the batch of each example's weighted negative
    log-probability of its true label, so doubling a weight doubles that
    example's contribution.
    """
    if not examples:
        raise ValueError("empty batch")
    index = {label: i for i, label in enumerate(labels)}
    n = len(examples)
    x = _design_matrix(examples, domain)
    w = np.array([ex.weight for ex in examples])
    targets = np.zeros(n, dtype=int)
    for i, ex in enumerate(examples):
        if not isinstance(ex.output, CategoricalOutput):
            raise UnlabelledExample("logistic objective needs categorical ground truth")
        targets[i] = index[ex.output.label]

    probs = _softmax(x @ params)
    picked = probs[np.arange(n), targets]
    loss = float(np.sum(w * -np.log(picked)) / n)

    delta = probs.copy()
    delta[np.arange(n), targets] -= 1.0
    grads = x.T @ (delta * (w / n)[:, None])
    return loss, grads


def squared_objective(
    params: np.ndarray,
    examples: Sequence[Example],
    domain: FeatureDomain,
) -> tuple[float, np.ndarray]:
    """Half squared error (weighted, mean over the batch) and its gradient."""
    if not examples:
        raise ValueError("empty batch")
    n = len(examples)
    x = _design_matrix(examples, domain)
    w = np.array([ex.weight for ex in examples])
    y = np.zeros(n)
    for i, ex in enumerate(examples):
        if not isinstance(ex.output, RealOutput):
            raise UnlabelledExample("squared objective needs real-valued ground truth")
        y[i] = ex.output.value

    pred = (x @ params)[:, 0]
    resid = pred - y
    loss = float(np.sum(w * 0.5 * resid * resid) / n)
    grads = x.T @ (resid * w / n)[:, None]
    return loss, grads


# ---------------------------------------------------------------------------
# Model and trainer
# ---------------------------------------------------------------------------

def _optimizer_provenance(cfg: OptimizerConfig) -> PObj:
    from .provenance import PFlt

    if isinstance(cfg, Sgd):
        return object_provenance("pvml.Sgd", config={"lr": PFlt(cfg.lr)}, instance={})
    if isinstance(cfg, AdaGrad):
        return object_provenance(
            "pvml.AdaGrad", config={"lr": PFlt(cfg.lr), "eps": PFlt(cfg.eps)}, instance={}
        )
    return object_provenance(
        "pvml.Adam",
        config={
            "lr": PFlt(cfg.lr),
            "beta1": PFlt(cfg.beta1),
            "beta2": PFlt(cfg.beta2),
            "eps": PFlt(cfg.eps),
        },
        instance={},
    )


class LinearSgdModel(Model):
    """Linear predictor; softmax scores for classification, raw value for regression."""

    model_class = LINEAR_MODEL_CLASS

    def __init__(self, name, provenance, feature_domain, output_domain, weights: np.ndarray):
        super().__init__(name, provenance, feature_domain, output_domain)
        expected = (len(feature_domain) + 1, self._num_outputs())
        if weights.shape != expected:
            raise ShapeMismatch(f"weights {weights.shape}, expected {expected}")
        if not np.all(np.isfinite(weights)):
            raise ValueError("model weights must be finite")
        self.weights = weights.copy()
        self.weights.setflags(write=False)

    def _num_outputs(self) -> int:
        if self.task == CATEGORICAL:
            return len(self.output_domain.labels())
        return 1

    def _predict_intersected(self, example, sparse: Mapping[int, float]) -> tuple[Output, dict[str, float]]:
        x = np.zeros(len(self.feature_domain) + 1)
        x[-1] = 1.0
        for fid, value in sparse.items():
            x[fid] = value
        z = x @ self.weights
        if self.task == REAL:
            return RealOutput(float(z[0])), {}
        probs = _softmax(z[None, :])[0]
        labels = self.output_domain.labels()
        scores = {label: float(p) for label, p in zip(labels, probs)}
        from .core import argmax_label

        return CategoricalOutput(argmax_label(scores)), scores


class LinearSgdTrainer(Trainer):
    """Trains linear/logistic models by mini-batch SGD with a fixed PRNG."""

    trainer_class = LINEAR_TRAINER_CLASS

    def __init__(
        self,
        objective: str,
        optimizer: OptimizerConfig,
        epochs: int,
        batch_size: int,
        seed: int,
    ):
        if objective not in (LOGISTIC, SQUARED):
            raise ValueError(f"unknown objective {objective!r}")
        if epochs < 1 or batch_size < 1:
            raise ValueError("epochs and batch size must be >= 1")
        super().__init__(seed)
        self.objective = objective
        self.optimizer = optimizer
        self.epochs = epochs
        self.batch_size = batch_size

    def provenance_with_count(self, count: int) -> PObj:
        return object_provenance(
            self.trainer_class,
            config={
                "objective": PStr(self.objective),
                "optimizer": _optimizer_provenance(self.optimizer),
                "epochs": PInt(self.epochs),
                "batch-size": PInt(self.batch_size),
                "seed": PInt(to_signed64(self.seed)),
            },
            instance={"invocation-count": PInt(count)},
        )

    def train_with_count(self, dataset: Dataset, count: int, user_info=None) -> LinearSgdModel:
        expected_task = CATEGORICAL if self.objective == LOGISTIC else REAL
        if dataset.task != expected_task:
            raise TaskMismatch(
                f"{self.objective} objective needs a {expected_task} dataset, got {dataset.task}"
            )

        domain = dataset.feature_domain
        if dataset.task == CATEGORICAL:
            labels = dataset.output_domain.labels()
            k = len(labels)
        else:
            labels = None
            k = 1
        weights = np.zeros((len(domain) + 1, k))
        state = init_state(self.optimizer, weights.shape)

        rng = Xoshiro256StarStar(self.stream_seed(count))
        order = list(range(len(dataset.examples)))
        for _ in range(self.epochs):
            rng.shuffle(order)
            for start in range(0, len(order), self.batch_size):
                batch = [dataset.examples[i] for i in order[start : start + self.batch_size]]
                if self.objective == LOGISTIC:
                    _, grads = logistic_objective(weights, batch, domain, labels)
                else:
                    _, grads = squared_objective(weights, batch, domain)
                state, weights = optimizer_step(self.optimizer, state, weights, grads)

        prov = model_provenance(
            LINEAR_MODEL_CLASS,
            trainer_provenance=self.provenance_with_count(count),
            dataset_provenance=dataset.provenance,
            user_info=user_info,
        )
        return LinearSgdModel(
            f"linear-sgd-{self.objective}", prov, domain, dataset.output_domain, weights
        )


def train_linear_sgd(
    dataset: Dataset,
    objective: str,
    optimizer: OptimizerConfig,
    epochs: int,
    batch_size: int,
    shuffle_seed: int,
) -> LinearSgdModel:
    """One-shot convenience: a fresh trainer and a single invocation."""
    trainer = LinearSgdTrainer(objective, optimizer, epochs, batch_size, shuffle_seed)
    return trainer.train(dataset)
