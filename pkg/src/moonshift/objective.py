"""Loss functions: cross-entropies, the paired-MSE DA loss, multi-kernel
squared MMD, the combined training objective, and MixUp mixing.

All losses are built from tape operations, so calling them under an active
:class:`~moonshift.tensor.Tape` makes them differentiable end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DomainError, PairingError, ShapeError
from .tensor import Tensor

LOG_EPS = 1e-12  # clamp for all logarithms; keeps saturated sigmoids NaN-free

DA_METHODS = ("none", "mse", "mmd")


@dataclass(frozen=True)
class MmdConfig:
    """Multi-kernel RBF setup: k(a,b) = exp(-|a-b|^2 / (2 sigma^2)) per
    bandwidth, combined as a weighted sum (equal weights 1.0 by default)."""

    sigmas: tuple[float, ...] = (0.2, 0.5, 0.9, 1.3)
    weights: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    estimator: str = "biased"

    def validate(self) -> None:
        problems = []
        if len(self.sigmas) != len(self.weights):
            problems.append(
                f"{len(self.sigmas)} bandwidths vs {len(self.weights)} weights"
            )
        if not self.sigmas:
            problems.append("need at least one kernel bandwidth")
        if any(s <= 0 for s in self.sigmas):
            problems.append(f"bandwidths must be positive, got {self.sigmas}")
        if any(w <= 0 for w in self.weights):
            problems.append(f"kernel weights must be positive, got {self.weights}")
        if self.estimator != "biased":
            problems.append(f"only the biased estimator is supported, got {self.estimator!r}")
        if problems:
            raise ConfigError(problems)


@dataclass(frozen=True)
class DaConfig:
    """Which DA loss to train with, its weight, batch size, and tap layer."""

    method: str = "none"
    lam: float = 1.0
    n: int = 32
    tap: str = "output"
    mmd: MmdConfig = field(default_factory=MmdConfig)

    def validate(self) -> None:
        problems = []
        if self.method not in DA_METHODS:
            problems.append(f"da method must be one of {DA_METHODS}, got {self.method!r}")
        if self.lam < 0:
            problems.append(f"da weight lambda must be >= 0, got {self.lam}")
        if self.n < 1:
            problems.append(f"da batch size n must be >= 1, got {self.n}")
        try:
            self.mmd.validate()
        except ConfigError as err:
            problems.extend(err.problems)
        if problems:
            raise ConfigError(problems)


@dataclass(frozen=True)
class MixupConfig:
    """Beta(alpha, beta) convex mixing of samples and labels."""

    enabled: bool = False
    alpha: float = 0.2
    beta: float = 0.2

    def validate(self) -> None:
        problems = []
        if self.alpha <= 0:
            problems.append(f"mixup alpha must be > 0, got {self.alpha}")
        if self.beta <= 0:
            problems.append(f"mixup beta must be > 0, got {self.beta}")
        if problems:
            raise ConfigError(problems)


def _as_column(target, rows: int) -> np.ndarray:
    arr = np.asarray(target, dtype=np.float64).reshape(-1, 1)
    if arr.shape[0] != rows:
        raise ShapeError(f"{arr.shape[0]} targets for {rows} predictions")
    return arr


def bce_loss(pred: Tensor, target) -> Tensor:
    """Binary cross-entropy, mean over the batch.

    ``pred`` holds probabilities in (0, 1), one column; ``target`` holds
    labels in [0, 1] (hard 0/1 or MixUp-soft). Probabilities are clamped at
    LOG_EPS before the logs.
    """
    if pred.cols != 1:
        raise ShapeError(f"bce_loss expects one prediction column, got {pred.cols}")
    y = _as_column(target, pred.rows)
    p = T.clip(pred, LOG_EPS, 1.0 - LOG_EPS)
    pos = Tensor(y) * T.log(p)
    neg = Tensor(1.0 - y) * T.log(1.0 - p)
    return T.scale(T.reduce_mean(pos + neg), -1.0)


def cce_loss(pred: Tensor, target) -> Tensor:
    """Categorical cross-entropy over probability rows; supports soft targets.

    Both ``pred`` and ``target`` rows must sum to 1 within 1e-6.
    """
    t = np.asarray(target, dtype=np.float64)
    if t.shape != pred.shape:
        raise ShapeError(f"target shape {t.shape} != prediction shape {pred.shape}")
    for name, arr in (("pred", pred.values), ("target", t)):
        sums = arr.sum(axis=1)
        bad = np.abs(sums - 1.0) > 1e-6
        if bad.any():
            row = int(np.argmax(bad))
            raise ContractError(
                f"{name} row {row} sums to {sums[row]!r}, not 1 within 1e-6"
            )
    p = T.clip(pred, LOG_EPS, 1.0 - LOG_EPS)
    per_element = Tensor(t) * T.log(p)
    return T.scale(T.reduce_sum(per_element), -1.0 / pred.rows)


def paired_mse(phi_s: Tensor, phi_t: Tensor) -> Tensor:
    """Mean squared difference between index-aligned activation rows.

    Averages over all n*d coordinates, i.e. (1/(n d)) sum_i |s_i - t_i|^2.
    """
    if phi_s.shape != phi_t.shape:
        raise PairingError(
            f"paired activations must match row for row: "
            f"{phi_s.shape} vs {phi_t.shape}"
        )
    return T.reduce_mean(T.square(T.sub(phi_s, phi_t)))


def mmd_squared(phi_s: Tensor, phi_t: Tensor, cfg: MmdConfig) -> Tensor:
    """Biased (V-statistic) multi-kernel squared MMD between two batches.

    For each kernel: mean over all n^2 source-source kernel values, plus the
    target-target mean, minus twice the cross mean; kernels are combined as
    a weighted sum. Same-index terms are included, which keeps the estimate
    nonnegative.
    """
    cfg.validate()
    if phi_s.cols != phi_t.cols:
        raise ShapeError(f"batch feature dims disagree: {phi_s.shape} vs {phi_t.shape}")
    if phi_s.rows == 0 or phi_t.rows == 0:
        raise DomainError("mmd_squared needs nonempty batches")
    d_ss = T.pairwise_sq_dists(phi_s, phi_s)
    d_tt = T.pairwise_sq_dists(phi_t, phi_t)
    d_st = T.pairwise_sq_dists(phi_s, phi_t)
    total = None
    for sigma, weight in zip(cfg.sigmas, cfg.weights):
        coeff = -1.0 / (2.0 * sigma * sigma)
        k_ss = T.mean_exp_scale(d_ss, coeff)
        k_tt = T.mean_exp_scale(d_tt, coeff)
        k_st = T.mean_exp_scale(d_st, coeff)
        term = T.scale(k_ss + k_tt - T.scale(k_st, 2.0), weight)
        total = term if total is None else total + term
    return total


def combined_loss(l_cl: Tensor, l_da: Tensor, lam: float) -> Tensor:
    """Classification loss plus lambda times the DA loss."""
    if lam < 0:
        raise DomainError(f"lambda must be >= 0, got {lam}")
    return l_cl + T.scale(l_da, float(lam))


def mixup(x1, y1, x2, y2, a: float):
    """Convex combination of two batches and their labels with coefficient a.

    Labels may be None (label-free DA pools); then None is returned for them.
    """
    if not 0.0 <= a <= 1.0:
        raise DomainError(f"mixing coefficient must lie in [0, 1], got {a}")
    mixed_x = a * np.asarray(x1) + (1.0 - a) * np.asarray(x2)
    if y1 is None and y2 is None:
        return mixed_x, None
    mixed_y = a * np.asarray(y1, dtype=np.float64) + (1.0 - a) * np.asarray(y2, dtype=np.float64)
    return mixed_x, mixed_y


def mixup_class_batch(x, y, cfg: MixupConfig, rng: np.random.Generator):
    """MixUp a labeled batch against a shuffled copy of itself."""
    a = float(rng.beta(cfg.alpha, cfg.beta))
    partner = rng.permutation(x.shape[0])
    return mixup(x, y, x[partner], y[partner], a)


def mixup_paired_batch(s, t, cfg: MixupConfig, rng: np.random.Generator):
    """MixUp a paired DA batch: one coefficient and one partner permutation
    shared by both halves, so row i of each half stays a pair."""
    a = float(rng.beta(cfg.alpha, cfg.beta))
    partner = rng.permutation(s.shape[0])
    mixed_s, _ = mixup(s, None, s[partner], None, a)
    mixed_t, _ = mixup(t, None, t[partner], None, a)
    return mixed_s, mixed_t


def mixup_unpaired_batch(x, cfg: MixupConfig, rng: np.random.Generator):
    """MixUp one unlabeled batch against a shuffled copy of itself."""
    a = float(rng.beta(cfg.alpha, cfg.beta))
    partner = rng.permutation(x.shape[0])
    mixed, _ = mixup(x, None, x[partner], None, a)
    return mixed
