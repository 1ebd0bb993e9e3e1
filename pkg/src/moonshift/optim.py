"""Adam optimizer and the reduce-on-plateau scheduler with best-model reset."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError, DomainError, ShapeError
from .model import Checkpoint, MlpModel, restore, snapshot
from .tensor import Tensor


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # whether a plateau restore also clears first/second moments
    reset_moments_on_restore: bool = False

    def validate(self) -> None:
        problems = []
        if self.lr <= 0:
            problems.append(f"learning rate must be > 0, got {self.lr}")
        if not 0 <= self.beta1 < 1:
            problems.append(f"beta1 must lie in [0, 1), got {self.beta1}")
        if not 0 <= self.beta2 < 1:
            problems.append(f"beta2 must lie in [0, 1), got {self.beta2}")
        if self.eps <= 0:
            problems.append(f"eps must be > 0, got {self.eps}")
        if problems:
            raise ConfigError(problems)


class AdamState:
    """Per-parameter moment buffers plus the step counter and live lr."""

    def __init__(self, params: list[Tensor], cfg: AdamConfig):
        cfg.validate()
        self.cfg = cfg
        self.lr = cfg.lr  # mutable: the scheduler may decay it
        self.t = 0
        self.m = [np.zeros_like(p.values) for p in params]
        self.v = [np.zeros_like(p.values) for p in params]


def init_adam(params: list[Tensor], cfg: AdamConfig | None = None) -> AdamState:
    return AdamState(params, cfg or AdamConfig())


def adam_step(
    params: list[Tensor], grads: list[np.ndarray], state: AdamState
) -> tuple[list[Tensor], AdamState]:
    """One Adam update, in place on the parameter tensors.

    m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;  p <- p - lr m^ / (sqrt(v^) + eps)
    with the usual 1/(1-b^t) bias corrections.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError(
            f"{len(params)} params, {len(grads)} grads, {len(state.m)} moment buffers"
        )
    for k, (p, g) in enumerate(zip(params, grads)):
        if g is None or g.shape != p.values.shape:
            got = None if g is None else g.shape
            raise ShapeError(f"gradient {k} has shape {got}, parameter has {p.values.shape}")
        if not np.isfinite(g).all():
            raise DivergenceError(f"non-finite gradient in parameter {k}")
    cfg = state.cfg
    state.t += 1
    bc1 = 1.0 - cfg.beta1 ** state.t
    bc2 = 1.0 - cfg.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        p.values -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
    return params, state


@dataclass(frozen=True)
class PlateauConfig:
    factor: float = 0.5
    patience: int = 10

    def validate(self) -> None:
        problems = []
        if not 0 < self.factor < 1:
            problems.append(f"decay factor must lie in (0, 1), got {self.factor}")
        if self.patience < 1:
            problems.append(f"patience must be >= 1, got {self.patience}")
        if problems:
            raise ConfigError(problems)


@dataclass
class PlateauState:
    """Tracks the monitored metric history, its best, and the bad-epoch count."""

    cfg: PlateauConfig = field(default_factory=PlateauConfig)
    history: list[float] = field(default_factory=list)
    best_metric: float = -np.inf
    best_checkpoint: Checkpoint | None = None
    bad_epochs: int = 0


def plateau_update(
    state: PlateauState, metric: float, model: MlpModel, lr: float
) -> tuple[float, bool]:
    """Advance the scheduler by one epoch's metric.

    Strict improvement records a checkpoint and resets patience; otherwise
    the bad-epoch counter grows, and once it reaches the patience limit the
    lr is multiplied by the decay factor, the best checkpoint is restored
    into the model bit-exactly, and patience resets. Returns (new lr,
    whether a restore happened).
    """
    if not np.isfinite(metric):
        raise DomainError(f"monitored metric must be finite, got {metric}")
    state.cfg.validate()
    state.history.append(float(metric))
    if metric > state.best_metric:
        state.best_metric = float(metric)
        state.best_checkpoint = snapshot(model)
        state.bad_epochs = 0
        return lr, False
    state.bad_epochs += 1
    if state.bad_epochs < state.cfg.patience:
        return lr, False
    state.bad_epochs = 0
    restore(model, state.best_checkpoint)
    return lr * state.cfg.factor, True
