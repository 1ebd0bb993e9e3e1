"""End-to-end training: config, the update loop, grid search, and exports.

One training run is strictly sequential; its randomness comes from named
streams derived from the master seed (see :mod:`moonshift.rng`), so a
config with fixed seed reproduces bit-identical results. Grid cells are
independent runs and may execute in a process pool.
"""

from __future__ import annotations

import csv
import json
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .data import (
    Rotate,
    ShiftSpec,
    Stretch,
    apply_shift,
    build_domain_datasets,
    epoch_batches,
    sample_batch,
)
from .errors import ConfigError, DivergenceError, DomainError, MoonshiftError
from .model import (
    MlpModel,
    MlpSpec,
    accuracy,
    forward,
    init_mlp,
    scores,
    snapshot,
)
from .objective import (
    DaConfig,
    MixupConfig,
    MmdConfig,
    bce_loss,
    cce_loss,
    combined_loss,
    mixup_class_batch,
    mixup_paired_batch,
    mixup_unpaired_batch,
    mmd_squared,
    paired_mse,
)
from .optim import AdamConfig, PlateauConfig, PlateauState, adam_step, init_adam, plateau_update
from .rng import make_rng, stream_seeds
from .tensor import Tape, Tensor

SCHEDULER_KINDS = ("constant", "plateau")
MONITORS = ("target", "source")


@dataclass(frozen=True)
class DataConfig:
    # default shift: rotate 45 degrees counter-clockwise, then stretch y by
    # 1.5 -- the covariate shift whose no-DA transfer accuracy matches the
    # two-moons reference results this toolkit reproduces
    n_train: int = 10000
    n_pairs: int = 10000
    n_val: int = 2000
    noise_sigma: float = 0.1
    shift: ShiftSpec = field(
        default_factory=lambda: ShiftSpec((Rotate(45.0), Stretch("y", 1.5)))
    )


@dataclass(frozen=True)
class SchedulerConfig:
    kind: str = "constant"
    factor: float = 0.5
    patience: int = 10
    monitor: str = "target"


@dataclass(frozen=True)
class TrainConfig:
    """Every knob of one training run; defaults reproduce the toy protocol."""

    seed: int = 0
    epochs: int = 250
    batch_size: int = 32
    eval_every: int = 1
    debug_checks: bool = False
    data: DataConfig = field(default_factory=DataConfig)
    model: MlpSpec = field(default_factory=MlpSpec)
    da: DaConfig = field(default_factory=DaConfig)
    mixup: MixupConfig = field(default_factory=MixupConfig)
    optim: AdamConfig = field(default_factory=AdamConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)

    def validate(self) -> None:
        problems: list[str] = []
        if self.epochs < 1:
            problems.append(f"run.epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            problems.append(f"run.batch_size must be >= 1, got {self.batch_size}")
        elif self.batch_size > self.data.n_train:
            problems.append(
                f"run.batch_size {self.batch_size} exceeds data.n_train {self.data.n_train}"
            )
        if self.eval_every < 1:
            problems.append(f"run.eval_every must be >= 1, got {self.eval_every}")
        for name, count in (("data.n_train", self.data.n_train),
                            ("data.n_pairs", self.data.n_pairs),
                            ("data.n_val", self.data.n_val)):
            if count < 2:
                problems.append(f"{name} must be >= 2, got {count}")
        if self.data.noise_sigma < 0:
            problems.append(f"data.noise_sigma must be >= 0, got {self.data.noise_sigma}")
        try:
            self.data.shift.validate()
        except DomainError as err:
            problems.append(f"data.shift: {err}")
        for sub in (self.model, self.da, self.mixup, self.optim):
            try:
                sub.validate()
            except ConfigError as err:
                problems.extend(err.problems)
        if self.da.n > self.data.n_pairs:
            problems.append(
                f"da.n {self.da.n} exceeds the pair pool size data.n_pairs {self.data.n_pairs}"
            )
        if len(self.model.sizes) >= 2:
            if self.model.sizes[0] != 2:
                problems.append(
                    f"model input size must be 2 for two-moons features, got {self.model.sizes[0]}"
                )
            out_act = self.model.activations[-1] if self.model.activations else None
            out_width = self.model.sizes[-1]
            binary = out_act == "sigmoid" and out_width == 1
            multi = out_act == "softmax" and out_width >= 2
            if not (binary or multi):
                problems.append(
                    "output layer must be a one-unit sigmoid (binary cross-entropy) "
                    f"or a softmax (categorical), got {out_width} x {out_act}"
                )
            taps = [f"hidden_{i}" for i in range(len(self.model.sizes) - 2)] + ["output"]
            taps += [f"{t}_pre" for t in taps]
            if self.da.tap not in taps:
                problems.append(f"da.tap {self.da.tap!r} not among {sorted(taps)}")
        if self.scheduler.kind not in SCHEDULER_KINDS:
            problems.append(
                f"sched.kind must be one of {SCHEDULER_KINDS}, got {self.scheduler.kind!r}"
            )
        if self.scheduler.monitor not in MONITORS:
            problems.append(
                f"sched.monitor must be one of {MONITORS}, got {self.scheduler.monitor!r}"
            )
        try:
            PlateauConfig(self.scheduler.factor, self.scheduler.patience).validate()
        except ConfigError as err:
            problems.extend(err.problems)
        if problems:
            raise ConfigError(problems)

    # --- flat key-value form (the config file / CLI surface) ---------------

    def to_flat(self) -> dict[str, str]:
        return {
            "run.seed": str(self.seed),
            "run.epochs": str(self.epochs),
            "run.batch_size": str(self.batch_size),
            "run.eval_every": str(self.eval_every),
            "run.debug_checks": _fmt_bool(self.debug_checks),
            "data.n_train": str(self.data.n_train),
            "data.n_pairs": str(self.data.n_pairs),
            "data.n_val": str(self.data.n_val),
            "data.noise_sigma": repr(self.data.noise_sigma),
            "data.shift": self.data.shift.to_text() or "none",
            "model.sizes": ",".join(str(s) for s in self.model.sizes),
            "model.activations": ",".join(self.model.activations),
            "da.method": self.da.method,
            "da.lambda": repr(self.da.lam),
            "da.n": str(self.da.n),
            "da.tap": self.da.tap,
            "da.sigmas": ",".join(repr(s) for s in self.da.mmd.sigmas),
            "da.kernel_weights": ",".join(repr(w) for w in self.da.mmd.weights),
            "mixup.enabled": _fmt_bool(self.mixup.enabled),
            "mixup.alpha": repr(self.mixup.alpha),
            "mixup.beta": repr(self.mixup.beta),
            "optim.lr": repr(self.optim.lr),
            "optim.beta1": repr(self.optim.beta1),
            "optim.beta2": repr(self.optim.beta2),
            "optim.eps": repr(self.optim.eps),
            "optim.reset_moments": _fmt_bool(self.optim.reset_moments_on_restore),
            "sched.kind": self.scheduler.kind,
            "sched.factor": repr(self.scheduler.factor),
            "sched.patience": str(self.scheduler.patience),
            "sched.monitor": self.scheduler.monitor,
        }

    @staticmethod
    def from_flat(values: dict[str, str]) -> "TrainConfig":
        """Build from flat keys; unknown keys and bad values are all reported."""
        defaults = TrainConfig().to_flat()
        problems = [f"unknown config key {k!r}" for k in values if k not in defaults]
        merged = {**defaults, **{k: v for k, v in values.items() if k in defaults}}
        p = _FlatParser(merged, problems)
        cfg = TrainConfig(
            seed=p.int_("run.seed"),
            epochs=p.int_("run.epochs"),
            batch_size=p.int_("run.batch_size"),
            eval_every=p.int_("run.eval_every"),
            debug_checks=p.bool_("run.debug_checks"),
            data=DataConfig(
                n_train=p.int_("data.n_train"),
                n_pairs=p.int_("data.n_pairs"),
                n_val=p.int_("data.n_val"),
                noise_sigma=p.float_("data.noise_sigma"),
                shift=p.shift_("data.shift"),
            ),
            model=MlpSpec(
                sizes=p.int_tuple("model.sizes"),
                activations=p.str_tuple("model.activations"),
            ),
            da=DaConfig(
                method=merged["da.method"].strip(),
                lam=p.float_("da.lambda"),
                n=p.int_("da.n"),
                tap=merged["da.tap"].strip(),
                mmd=MmdConfig(
                    sigmas=p.float_tuple("da.sigmas"),
                    weights=p.float_tuple("da.kernel_weights"),
                ),
            ),
            mixup=MixupConfig(
                enabled=p.bool_("mixup.enabled"),
                alpha=p.float_("mixup.alpha"),
                beta=p.float_("mixup.beta"),
            ),
            optim=AdamConfig(
                lr=p.float_("optim.lr"),
                beta1=p.float_("optim.beta1"),
                beta2=p.float_("optim.beta2"),
                eps=p.float_("optim.eps"),
                reset_moments_on_restore=p.bool_("optim.reset_moments"),
            ),
            scheduler=SchedulerConfig(
                kind=merged["sched.kind"].strip(),
                factor=p.float_("sched.factor"),
                patience=p.int_("sched.patience"),
                monitor=merged["sched.monitor"].strip(),
            ),
        )
        if problems:
            raise ConfigError(problems)
        return cfg


def _fmt_bool(b: bool) -> str:
    return "true" if b else "false"


class _FlatParser:
    """Typed accessors over flat config strings that collect all failures."""

    def __init__(self, values: dict[str, str], problems: list[str]):
        self.values = values
        self.problems = problems

    def _get(self, key, convert, fallback):
        raw = self.values[key].strip()
        try:
            return convert(raw)
        except (ValueError, DomainError) as err:
            self.problems.append(f"{key}: cannot parse {raw!r} ({err})")
            return fallback

    def int_(self, key):
        return self._get(key, int, 0)

    def float_(self, key):
        return self._get(key, float, 0.0)

    def bool_(self, key):
        def convert(raw):
            lowered = raw.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError("expected true/false")
        return self._get(key, convert, False)

    def int_tuple(self, key):
        return self._get(key, lambda r: tuple(int(x) for x in r.split(",")), (2, 32, 1))

    def float_tuple(self, key):
        return self._get(key, lambda r: tuple(float(x) for x in r.split(",")), ())

    def str_tuple(self, key):
        return self._get(key, lambda r: tuple(x.strip() for x in r.split(",")), ())

    def shift_(self, key):
        return self._get(key, ShiftSpec.from_text, ShiftSpec())


@dataclass
class TrainResult:
    """Traces and checkpoints of one run; wall time is excluded from equality."""

    config: dict[str, str]
    stream_seeds: dict[str, int]
    eval_epochs: list[int]
    source_acc: list[float]
    target_acc: list[float]
    loss_cl: list[float]
    loss_da: list[float]
    loss_total: list[float]
    best_target_acc: float
    best_target_epoch: int
    best_model: dict
    final_model: dict
    wall_seconds: float = field(compare=False, default=0.0)

    @property
    def best_source_acc(self) -> float:
        return max(self.source_acc)

    def to_doc(self) -> dict:
        return {
            "kind": "train_result",
            "config": self.config,
            "stream_seeds": self.stream_seeds,
            "eval_epochs": self.eval_epochs,
            "source_acc": self.source_acc,
            "target_acc": self.target_acc,
            "loss_cl": self.loss_cl,
            "loss_da": self.loss_da,
            "loss_total": self.loss_total,
            "best_target_acc": self.best_target_acc,
            "best_target_epoch": self.best_target_epoch,
            "best_model": self.best_model,
            "final_model": self.final_model,
            "wall_seconds": self.wall_seconds,
        }

    @staticmethod
    def from_doc(doc: dict) -> "TrainResult":
        fields = {k: v for k, v in doc.items() if k != "kind"}
        return TrainResult(**fields)


def train_run(
    cfg: TrainConfig,
    on_epoch: Callable[[int, float | None, float | None, float], None] | None = None,
) -> TrainResult:
    """Train one model per the config and report traces plus checkpoints.

    Each update step draws a classification batch; with DA enabled it also
    draws a DA batch (index-aligned pairs for mse, two independent draws for
    mmd), evaluates the DA loss at the tap layer, and takes one Adam step on
    classification loss + lambda * DA loss. Validation accuracy is measured
    on the evaluation cadence; the best checkpoint follows the monitored
    metric. Raises :class:`DivergenceError` if a loss or gradient goes
    non-finite.
    """
    cfg.validate()
    started = time.perf_counter()
    seeds = stream_seeds(cfg.seed)
    dataset = build_domain_datasets(
        cfg.data.n_train,
        cfg.data.n_pairs,
        cfg.data.n_val,
        cfg.data.noise_sigma,
        cfg.data.shift,
        seeds["data"],
    )
    model = init_mlp(replace(cfg.model, seed=seeds["init"]))
    params = model.parameters()
    adam = init_adam(params, cfg.optim)
    plateau = PlateauState(PlateauConfig(cfg.scheduler.factor, cfg.scheduler.patience))

    rng_class = make_rng(seeds["class_batching"])
    rng_da = make_rng(seeds["da_batching"])
    rng_mx_class = make_rng(seeds["mixup_class"])
    rng_mx_da = make_rng(seeds["mixup_da"])

    multiclass = model.spec.activations[-1] == "softmax"
    n_classes = model.spec.sizes[-1]
    method = cfg.da.method
    lam = cfg.da.lam
    tap = cfg.da.tap

    eval_epochs: list[int] = []
    source_trace: list[float] = []
    target_trace: list[float] = []
    cl_trace: list[float] = []
    da_trace: list[float] = []
    total_trace: list[float] = []
    best_metric = -np.inf
    best_ckpt = snapshot(model)

    for epoch in range(1, cfg.epochs + 1):
        cl_sum = da_sum = total_sum = 0.0
        steps = 0
        for step, (xb, yb) in enumerate(
            epoch_batches(dataset.source_train, cfg.batch_size, rng_class), start=1
        ):
            targets = _encode_labels(yb, multiclass, n_classes)
            if cfg.mixup.enabled:
                xb, targets = mixup_class_batch(xb, targets, cfg.mixup, rng_mx_class)
            with Tape() as tape:
                out = forward(model, Tensor(xb)).output
                l_cl = cce_loss(out, targets) if multiclass else bce_loss(out, targets)
                l_da = None
                if method == "mse":
                    s_batch, t_batch = sample_batch(dataset, "paired", cfg.da.n, rng_da)
                    if cfg.debug_checks:
                        _assert_pairing(s_batch, t_batch, cfg.data.shift)
                    if cfg.mixup.enabled:
                        s_batch, t_batch = mixup_paired_batch(
                            s_batch, t_batch, cfg.mixup, rng_mx_da
                        )
                    phi_s = forward(model, Tensor(s_batch)).tap(tap)
                    phi_t = forward(model, Tensor(t_batch)).tap(tap)
                    l_da = paired_mse(phi_s, phi_t)
                elif method == "mmd":
                    s_batch = sample_batch(dataset, "unpaired_source", cfg.da.n, rng_da)
                    t_batch = sample_batch(dataset, "unpaired_target", cfg.da.n, rng_da)
                    if cfg.mixup.enabled:
                        s_batch = mixup_unpaired_batch(s_batch, cfg.mixup, rng_mx_da)
                        t_batch = mixup_unpaired_batch(t_batch, cfg.mixup, rng_mx_da)
                    phi_s = forward(model, Tensor(s_batch)).tap(tap)
                    phi_t = forward(model, Tensor(t_batch)).tap(tap)
                    l_da = mmd_squared(phi_s, phi_t, cfg.da.mmd)
                loss = l_cl if l_da is None else combined_loss(l_cl, l_da, lam)
            loss_value = loss.values[0, 0]
            if not np.isfinite(loss_value):
                raise DivergenceError("training loss went non-finite", epoch, step)
            tape.backward(loss)
            try:
                adam_step(params, [p.grad for p in params], adam)
            except DivergenceError as err:
                raise DivergenceError(str(err), epoch, step) from None
            cl_sum += l_cl.values[0, 0]
            da_sum += l_da.values[0, 0] if l_da is not None else 0.0
            total_sum += loss_value
            steps += 1
        cl_trace.append(cl_sum / steps)
        da_trace.append(da_sum / steps)
        total_trace.append(total_sum / steps)

        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            src_acc = accuracy(model, dataset.source_val)
            tgt_acc = accuracy(model, dataset.target_val)
            eval_epochs.append(epoch)
            source_trace.append(src_acc)
            target_trace.append(tgt_acc)
            metric = tgt_acc if cfg.scheduler.monitor == "target" else src_acc
            if metric > best_metric:
                best_metric = metric
                best_ckpt = snapshot(model)
            if cfg.scheduler.kind == "plateau":
                new_lr, restored = plateau_update(plateau, metric, model, adam.lr)
                if restored and cfg.optim.reset_moments_on_restore:
                    adam.m = [np.zeros_like(p.values) for p in params]
                    adam.v = [np.zeros_like(p.values) for p in params]
                    adam.t = 0
                adam.lr = new_lr
            if on_epoch is not None:
                on_epoch(epoch, src_acc, tgt_acc, adam.lr)

    best_idx = int(np.argmax(target_trace))
    return TrainResult(
        config=cfg.to_flat(),
        stream_seeds=seeds,
        eval_epochs=eval_epochs,
        source_acc=source_trace,
        target_acc=target_trace,
        loss_cl=cl_trace,
        loss_da=da_trace,
        loss_total=total_trace,
        best_target_acc=float(target_trace[best_idx]),
        best_target_epoch=int(eval_epochs[best_idx]),
        best_model=best_ckpt.to_doc(),
        final_model=snapshot(model).to_doc(),
        wall_seconds=time.perf_counter() - started,
    )


def _encode_labels(labels: np.ndarray, multiclass: bool, n_classes: int) -> np.ndarray:
    if not multiclass:
        return labels.astype(np.float64)
    onehot = np.zeros((labels.shape[0], n_classes))
    onehot[np.arange(labels.shape[0]), labels] = 1.0
    return onehot


def _assert_pairing(s_batch: np.ndarray, t_batch: np.ndarray, shift: ShiftSpec) -> None:
    expected = apply_shift(s_batch, shift)
    if not np.array_equal(t_batch, expected):
        worst = np.abs(t_batch - expected).max()
        raise DivergenceError(
            f"paired batch broke the pairing invariant (max deviation {worst})"
        )


# --- grid search -----------------------------------------------------------


@dataclass
class GridCell:
    lam: float
    n: int
    seeds: list[int]
    accuracies: list[float | None]
    errors: list[str | None]
    median: float | None


@dataclass
class GridReport:
    """Best-target-accuracy matrix over (lambda, n), Table-style rows = n."""

    method: str
    lambdas: list[float]
    ns: list[int]
    seeds: list[int]
    matrix: list[list[float | None]]
    baseline: float | None
    baseline_accuracies: list[float]
    cells: list[GridCell]
    config: dict[str, str]
    wall_seconds: float = field(compare=False, default=0.0)

    def to_doc(self) -> dict:
        doc = {
            "kind": "grid_report",
            "method": self.method,
            "lambdas": self.lambdas,
            "ns": self.ns,
            "seeds": self.seeds,
            "matrix": self.matrix,
            "baseline": self.baseline,
            "baseline_accuracies": self.baseline_accuracies,
            "cells": [vars(c) for c in self.cells],
            "config": self.config,
            "wall_seconds": self.wall_seconds,
        }
        return doc

    @staticmethod
    def from_doc(doc: dict) -> "GridReport":
        fields = {k: v for k, v in doc.items() if k != "kind"}
        fields["cells"] = [GridCell(**c) for c in fields["cells"]]
        return GridReport(**fields)


def _run_for_grid(cfg: TrainConfig) -> tuple[float | None, str | None]:
    """Best target accuracy of one grid run, or the error that aborted it."""
    try:
        return train_run(cfg).best_target_acc, None
    except MoonshiftError as err:
        return None, str(err)


def grid_search(
    base: TrainConfig,
    lambdas: list[float],
    ns: list[int],
    seeds_per_cell: int = 1,
    jobs: int = 1,
    include_baseline: bool = True,
    on_cell: Callable[[GridCell], None] | None = None,
) -> GridReport:
    """Train one run per (lambda, n, seed) and tabulate best target accuracy.

    Cell medians are taken across seeds; run seeds are base.seed + i. A cell
    run that aborts is recorded as an error in that cell without failing the
    grid. ``jobs`` > 1 fans runs out to a process pool.
    """
    if not lambdas or not ns:
        raise ConfigError("grid axes must be nonempty")
    if seeds_per_cell < 1:
        raise ConfigError(f"seeds_per_cell must be >= 1, got {seeds_per_cell}")
    base.validate()
    started = time.perf_counter()
    run_seeds = [base.seed + i for i in range(seeds_per_cell)]

    configs: list[TrainConfig] = []
    for n in ns:
        for lam in lambdas:
            for seed in run_seeds:
                configs.append(
                    replace(base, seed=seed, da=replace(base.da, lam=lam, n=n))
                )
    baseline_configs = []
    if include_baseline:
        baseline_configs = [
            replace(base, seed=seed, da=replace(base.da, method="none"))
            for seed in run_seeds
        ]

    all_configs = configs + baseline_configs
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_for_grid, all_configs))
    else:
        outcomes = [_run_for_grid(cfg) for cfg in all_configs]

    cells: list[GridCell] = []
    matrix: list[list[float | None]] = []
    cursor = 0
    for n in ns:
        row: list[float | None] = []
        for lam in lambdas:
            accs: list[float | None] = []
            errors: list[str | None] = []
            for _ in run_seeds:
                acc, err = outcomes[cursor]
                cursor += 1
                accs.append(acc)
                errors.append(err)
            ok = [a for a in accs if a is not None]
            median = statistics.median(ok) if ok else None
            cell = GridCell(
                lam=lam, n=n, seeds=list(run_seeds),
                accuracies=accs, errors=errors, median=median,
            )
            cells.append(cell)
            row.append(median)
            if on_cell is not None:
                on_cell(cell)
        matrix.append(row)

    baseline_accs: list[float] = []
    for _ in baseline_configs:
        acc, err = outcomes[cursor]
        cursor += 1
        if acc is not None:
            baseline_accs.append(acc)
    baseline = statistics.median(baseline_accs) if baseline_accs else None

    return GridReport(
        method=base.da.method,
        lambdas=list(lambdas),
        ns=list(ns),
        seeds=run_seeds,
        matrix=matrix,
        baseline=baseline,
        baseline_accuracies=baseline_accs,
        cells=cells,
        config=base.to_flat(),
        wall_seconds=time.perf_counter() - started,
    )


# --- exports ----------------------------------------------------------------


def export_boundary(
    model: MlpModel, bounds: tuple[float, float, float, float], resolution: int
) -> np.ndarray:
    """Model scores on an inclusive lattice over (xmin, xmax, ymin, ymax).

    Returns resolution^2 rows of (x, y, score), y varying slowest. The score
    is the single output unit for binary models, else the max class
    probability.
    """
    xmin, xmax, ymin, ymax = (float(v) for v in bounds)
    if resolution < 2:
        raise DomainError(f"resolution must be >= 2, got {resolution}")
    if not (xmin < xmax and ymin < ymax):
        raise DomainError(f"degenerate rectangle {bounds}")
    xs = np.linspace(xmin, xmax, resolution)
    ys = np.linspace(ymin, ymax, resolution)
    gx, gy = np.meshgrid(xs, ys)
    points = np.column_stack([gx.ravel(), gy.ravel()])
    out = scores(model, points)
    score = out[:, 0] if out.shape[1] == 1 else out.max(axis=1)
    return np.column_stack([points, score])


def write_boundary_csv(grid: np.ndarray, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "score"])
        for x, y, score in grid:
            writer.writerow([repr(float(x)), repr(float(y)), repr(float(score))])
    return path


def write_report(report: TrainResult | GridReport, out_dir) -> dict[str, Path]:
    """Write result.json for a run, or grid.json plus grid.csv for a grid."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    if isinstance(report, TrainResult):
        path = out_dir / "result.json"
        path.write_text(json.dumps(report.to_doc(), indent=2))
        written["result"] = path
        return written
    path = out_dir / "grid.json"
    path.write_text(json.dumps(report.to_doc(), indent=2))
    written["grid"] = path
    csv_path = out_dir / "grid.csv"
    with csv_path.open("w", newline="") as fh:
        fh.write(f"# method={report.method}\n")
        fh.write(f"# baseline={report.baseline!r}\n")
        writer = csv.writer(fh)
        writer.writerow(["n\\lambda"] + [repr(l) for l in report.lambdas])
        for n, row in zip(report.ns, report.matrix):
            writer.writerow([n] + [("" if v is None else repr(v)) for v in row])
    written["grid_csv"] = csv_path
    return written


def read_report(path) -> TrainResult | GridReport:
    """Parse a file written by :func:`write_report` back into its dataclass."""
    doc = json.loads(Path(path).read_text())
    kind = doc.get("kind")
    if kind == "train_result":
        return TrainResult.from_doc(doc)
    if kind == "grid_report":
        return GridReport.from_doc(doc)
    raise DomainError(f"{path}: not a moonshift report (kind={kind!r})")
