"""Semi-supervised training: masked cross-entropy, Adam with L2 weight
decay folded into the gradients, fixed-seed reproducibility, and selection
of the epoch with the best validation accuracy (earliest on ties).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .data import GraphDataset, MissingSpec, prepare
from .errors import ConfigError, NumericError
from .model import LayerParams, ModelConfig, init_params, model_forward


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.005
    weight_decay: float = 5e-4
    epochs: int = 1000
    seeds: tuple = (0, 1, 2, 3)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if len(self.seeds) < 1:
            raise ConfigError("at least one seed is required")


@dataclass
class RunResult:
    """Per-epoch trajectories plus the epoch-best snapshot. best_epoch is a
    0-based index into the trajectories."""

    train_loss: np.ndarray
    val_acc: np.ndarray
    test_acc: np.ndarray
    best_epoch: int
    test_accuracy_at_best_val: float
    representations: np.ndarray
    elapsed_s: float
    seed: int
    best_params: list = field(repr=False, default_factory=list)


def masked_cross_entropy(logits: Tensor, labels, mask) -> Tensor:
    """Mean over the mask of -log_softmax(logits_i)[y_i]."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ConfigError("masked_cross_entropy: empty mask")
    labels = np.asarray(labels, dtype=np.int64)
    picked = ad.pick(ad.log_softmax(ad.take_rows(logits, mask)), labels[mask])
    return ad.multiply(ad.mean_all(picked), -1.0)


@dataclass
class AdamState:
    m: list
    v: list

    @classmethod
    def for_params(cls, params):
        return cls(
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
        )


def adam_step(params, grads, state: AdamState, t: int, config: TrainConfig) -> None:
    """Bias-corrected Adam update, in place. Weight decay enters as an L2
    term added to the gradient before the moment update."""
    if t < 1:
        raise ConfigError(f"adam_step: t must be >= 1, got {t}")
    b1, b2 = config.beta1, config.beta2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        if config.weight_decay:
            g = g + config.weight_decay * p.data
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        p.data -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)


def _accuracy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    if mask.size == 0:
        return float("nan")
    pred = np.argmax(logits[mask], axis=1)  # argmax ties -> lowest class index
    return float(np.mean(pred == labels[mask]))


def _locate_first_nan(features, edges, params, config, rng_state) -> str:
    """Replay the failing forward with per-op finite checks and name the
    first layer whose output is non-finite."""
    rng = np.random.default_rng()
    rng.bit_generator.state = rng_state
    prev = ad.set_check_finite(False)
    try:
        result = model_forward(
            features, edges, params, config, training=True, rng=rng,
            capture_layers=True,
        )
        for i, layer_out in enumerate(result.layers):
            if not np.all(np.isfinite(layer_out.data)):
                return f"layer {i}"
        return "loss"
    finally:
        ad.set_check_finite(prev)


def clone_params(params):
    """Detached deep copy of a parameter list (for epoch-best snapshots)."""
    out = []
    for p in params:
        out.append(
            LayerParams(
                w_self=Tensor(p.w_self.data.copy()),
                w_rel=None if p.w_rel is None else Tensor(p.w_rel.data.copy()),
                attn=Tensor(p.attn.data.copy()),
            )
        )
    return out


def train_run(
    ds: GraphDataset,
    model_config: ModelConfig,
    train_config: TrainConfig,
    missing_spec: MissingSpec | None,
    seed: int,
    normalize_rows: bool = True,
) -> RunResult:
    """One fully deterministic training run: seeded init, dropout and
    missing-feature sampling; returns trajectories and the representations
    produced by the epoch-best parameters."""
    started = time.perf_counter()
    ds = prepare(ds, missing_spec, normalize_rows)
    edges = (ds.edge_src, ds.edge_dst)
    rng = np.random.default_rng(seed)
    params = init_params(rng, model_config, ds.d, ds.num_classes)
    flat = [t for p in params for t in p.tensors()]
    state = AdamState.for_params(flat)
    features = Tensor(ds.features)

    epochs = train_config.epochs
    train_loss = np.empty(epochs)
    val_acc = np.empty(epochs)
    test_acc = np.empty(epochs)
    best_epoch = -1
    best_val = -np.inf
    best_params: list = []

    for epoch in range(epochs):
        rng_state = rng.bit_generator.state
        tape = Tape()
        with tape:
            tape.watch(*flat)
            result = model_forward(
                features, edges, params, model_config, training=True, rng=rng
            )
            loss = masked_cross_entropy(result.logits, ds.labels, ds.train_idx)
        if not np.isfinite(loss.data):
            where = _locate_first_nan(features, edges, params, model_config, rng_state)
            raise NumericError(
                f"non-finite loss at epoch {epoch} (first non-finite output: {where})"
            )
        tape.backward(loss)
        adam_step(flat, [t.grad for t in flat], state, epoch + 1, train_config)
        for t in flat:
            t.zero_grad()

        eval_result = model_forward(
            features, edges, params, model_config, training=False
        )
        logits = eval_result.logits.data
        train_loss[epoch] = masked_cross_entropy(
            eval_result.logits, ds.labels, ds.train_idx
        ).data
        val_acc[epoch] = _accuracy(logits, ds.labels, ds.val_idx)
        test_acc[epoch] = _accuracy(logits, ds.labels, ds.test_idx)
        if val_acc[epoch] > best_val:  # strict: earliest epoch wins ties
            best_val = val_acc[epoch]
            best_epoch = epoch
            best_params = clone_params(params)

    best_result = model_forward(
        features, edges, best_params, model_config, training=False
    )
    return RunResult(
        train_loss=train_loss,
        val_acc=val_acc,
        test_acc=test_acc,
        best_epoch=best_epoch,
        test_accuracy_at_best_val=float(test_acc[best_epoch]),
        representations=best_result.hidden.data.copy(),
        elapsed_s=time.perf_counter() - started,
        seed=seed,
        best_params=best_params,
    )
