"""Two-moons data generation, normalization, covariate shifts, and batching.

All arrays here are plain float64 numpy; tensors enter the picture only when
the trainer wraps a batch for the tape. Every stochastic choice is driven by
an explicit seed (see :mod:`moonshift.rng`), so equal seeds give bitwise
equal datasets.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Literal

import numpy as np

from .errors import ContractError, DomainError
from .rng import gaussian, make_rng, split_seed


@dataclass(frozen=True)
class Stretch:
    """Multiply one axis ('x' or 'y') by a positive factor."""

    axis: str
    factor: float


@dataclass(frozen=True)
class Rotate:
    """Rotate by the given angle in degrees, counter-clockwise positive."""

    degrees: float


@dataclass(frozen=True)
class ShiftSpec:
    """Ordered affine transforms defining the source -> target covariate shift."""

    transforms: tuple[Stretch | Rotate, ...] = ()

    def validate(self) -> None:
        for t in self.transforms:
            if isinstance(t, Stretch):
                if t.axis not in ("x", "y"):
                    raise DomainError(f"stretch axis must be 'x' or 'y', got {t.axis!r}")
                if not t.factor > 0:
                    raise DomainError(f"stretch factor must be > 0, got {t.factor}")
            elif isinstance(t, Rotate):
                if not math.isfinite(t.degrees):
                    raise DomainError("rotation angle must be finite")
            else:
                raise DomainError(f"unknown transform {t!r}")

    def to_text(self) -> str:
        parts = []
        for t in self.transforms:
            if isinstance(t, Stretch):
                parts.append(f"stretch:{t.axis}:{t.factor!r}")
            else:
                parts.append(f"rotate:{t.degrees!r}")
        return ",".join(parts)

    @staticmethod
    def from_text(text: str) -> "ShiftSpec":
        text = text.strip()
        if not text or text == "none":
            return ShiftSpec()
        transforms: list[Stretch | Rotate] = []
        for part in text.split(","):
            fields = part.strip().split(":")
            if fields[0] == "stretch" and len(fields) == 3:
                transforms.append(Stretch(fields[1], float(fields[2])))
            elif fields[0] == "rotate" and len(fields) == 2:
                transforms.append(Rotate(float(fields[1])))
            else:
                raise DomainError(
                    f"cannot parse shift transform {part!r}; expected "
                    "'stretch:<axis>:<factor>' or 'rotate:<degrees>'"
                )
        spec = ShiftSpec(tuple(transforms))
        spec.validate()
        return spec


@dataclass(frozen=True)
class LabeledSet:
    """Feature matrix [N x 2] with 0/1 class labels of matching length."""

    features: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class MinMaxParams:
    """Per-feature affine map fitted so min -> -0.5 and max -> +0.5."""

    mins: tuple[float, ...]
    maxs: tuple[float, ...]

    def apply(self, x: np.ndarray) -> np.ndarray:
        mins = np.array(self.mins)
        maxs = np.array(self.maxs)
        return (x - mins) / (maxs - mins) - 0.5


@dataclass(frozen=True)
class DomainDataset:
    """All sets one DA training run needs.

    ``pair_pool_target`` row i is the shift applied to ``pair_pool_source``
    row i; labels for the pools are withheld by construction.
    """

    source_train: LabeledSet
    pair_pool_source: np.ndarray
    pair_pool_target: np.ndarray
    source_val: LabeledSet
    target_val: LabeledSet
    norm: MinMaxParams | None = None
    shift: ShiftSpec | None = None


BatchKind = Literal["classification", "paired", "unpaired_source", "unpaired_target"]


def make_two_moons(n: int, noise_sigma: float, seed: int) -> LabeledSet:
    """Two interleaved half-circles with Gaussian coordinate noise.

    ceil(n/2) points sit on the upper arc (cos t, sin t) with label 0 and
    floor(n/2) on the lower arc (1 - cos t, 1 - sin t - 0.5) with label 1,
    t evenly spaced over [0, pi] per arc. Noise is i.i.d. N(0, sigma^2)
    per coordinate.
    """
    if n < 2:
        raise DomainError(f"need at least 2 samples, got {n}")
    if noise_sigma < 0:
        raise DomainError(f"noise_sigma must be >= 0, got {noise_sigma}")
    n_upper = (n + 1) // 2
    n_lower = n // 2
    t_upper = np.linspace(0.0, np.pi, n_upper)
    t_lower = np.linspace(0.0, np.pi, n_lower)
    upper = np.column_stack([np.cos(t_upper), np.sin(t_upper)])
    lower = np.column_stack([1.0 - np.cos(t_lower), 1.0 - np.sin(t_lower) - 0.5])
    features = np.vstack([upper, lower])
    if noise_sigma > 0:
        rng = make_rng(seed)
        features = features + noise_sigma * gaussian(rng, n, 2)
    labels = np.concatenate([np.zeros(n_upper, dtype=np.int64),
                             np.ones(n_lower, dtype=np.int64)])
    return LabeledSet(features, labels)


def minmax_normalize(x: np.ndarray) -> tuple[np.ndarray, MinMaxParams]:
    """Rescale each feature into [-0.5, 0.5]; returns the fitted map too."""
    mins = x.min(axis=0)
    maxs = x.max(axis=0)
    for j in range(x.shape[1]):
        if maxs[j] <= mins[j]:
            raise DomainError(f"feature {j} is constant; cannot min-max normalize")
    params = MinMaxParams(tuple(float(m) for m in mins), tuple(float(m) for m in maxs))
    return params.apply(x), params


def apply_shift(x: np.ndarray, spec: ShiftSpec) -> np.ndarray:
    """Apply the transforms in listed order; rotation is counter-clockwise positive.

    Implemented column-wise (no matrix product), so applying the spec to a
    single row gives bitwise the same result as extracting that row from a
    transformed batch.
    """
    spec.validate()
    out = np.array(x, dtype=np.float64)
    for t in spec.transforms:
        if isinstance(t, Stretch):
            out[:, 0 if t.axis == "x" else 1] *= t.factor
        else:
            theta = math.radians(t.degrees)
            c, s = math.cos(theta), math.sin(theta)
            px = out[:, 0].copy()
            py = out[:, 1].copy()
            out[:, 0] = c * px - s * py
            out[:, 1] = s * px + c * py
    return out


def build_domain_datasets(
    n_train: int,
    n_pairs: int,
    n_val: int,
    noise_sigma: float,
    spec: ShiftSpec,
    seed: int,
) -> DomainDataset:
    """Generate source training, pair pools, and validation sets.

    Normalization is fitted on the source training features only and reused
    for every other set before shifting, so no target statistics leak into
    preprocessing. The pair pool is disjoint from the training samples; its
    target half is the shift applied to its source half, labels withheld.
    Target validation features are shifted the same way but keep labels for
    evaluation.
    """
    for name, count in (("n_train", n_train), ("n_pairs", n_pairs), ("n_val", n_val)):
        if count < 2:
            raise DomainError(f"{name} must be >= 2, got {count}")
    spec.validate()
    train_seed, pair_seed, sval_seed, tval_seed = split_seed(seed, 4)

    train_raw = make_two_moons(n_train, noise_sigma, train_seed)
    train_features, norm = minmax_normalize(train_raw.features)
    source_train = LabeledSet(train_features, train_raw.labels)

    pair_raw = make_two_moons(n_pairs, noise_sigma, pair_seed)
    pool_source = norm.apply(pair_raw.features)
    pool_target = apply_shift(pool_source, spec)

    sval_raw = make_two_moons(n_val, noise_sigma, sval_seed)
    source_val = LabeledSet(norm.apply(sval_raw.features), sval_raw.labels)

    tval_raw = make_two_moons(n_val, noise_sigma, tval_seed)
    target_val = LabeledSet(apply_shift(norm.apply(tval_raw.features), spec),
                            tval_raw.labels)

    return DomainDataset(
        source_train=source_train,
        pair_pool_source=pool_source,
        pair_pool_target=pool_target,
        source_val=source_val,
        target_val=target_val,
        norm=norm,
        shift=spec,
    )


def sample_batch(
    dataset: DomainDataset,
    kind: BatchKind,
    size: int,
    rng: np.random.Generator,
):
    """Draw one batch; indices within a draw are distinct (no replacement).

    classification -> (features, labels) from the labeled training set;
    paired -> index-aligned rows from both pair pools; unpaired_source /
    unpaired_target -> an independent draw from the respective pool.
    Successive calls draw independently (the pools are not partitioned into
    epochs; see :func:`epoch_batches` for that).
    """
    if size < 1:
        raise ContractError(f"batch size must be >= 1, got {size}")
    if kind == "classification":
        pool = len(dataset.source_train)
        _check_pool(size, pool, kind)
        idx = rng.choice(pool, size=size, replace=False)
        return dataset.source_train.features[idx], dataset.source_train.labels[idx]
    pool = dataset.pair_pool_source.shape[0]
    _check_pool(size, pool, kind)
    if kind == "paired":
        idx = rng.choice(pool, size=size, replace=False)
        return dataset.pair_pool_source[idx], dataset.pair_pool_target[idx]
    if kind == "unpaired_source":
        idx = rng.choice(pool, size=size, replace=False)
        return dataset.pair_pool_source[idx]
    if kind == "unpaired_target":
        idx = rng.choice(pool, size=size, replace=False)
        return dataset.pair_pool_target[idx]
    raise ContractError(f"unknown batch kind {kind!r}")


def _check_pool(size: int, pool: int, kind: str) -> None:
    if size > pool:
        raise ContractError(f"{kind} batch of {size} exceeds pool of {pool} samples")


def epoch_batches(
    labeled: LabeledSet, batch_size: int, rng: np.random.Generator
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """One epoch of without-replacement batches partitioning the set.

    Shuffles once, then yields ceil(N / batch_size) consecutive chunks; the
    last chunk may be short.
    """
    if batch_size < 1:
        raise ContractError(f"batch size must be >= 1, got {batch_size}")
    n = len(labeled)
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        yield labeled.features[idx], labeled.labels[idx]


# --- CSV export / import -------------------------------------------------

_MEMBER_FILES = {
    "source_train": True,   # name -> has labels
    "pair_source": False,
    "pair_target": False,
    "source_val": True,
    "target_val": True,
}


def export_csv(dataset: DomainDataset, out_dir) -> list[Path]:
    """Write one CSV per member set; floats use repr so they round-trip exactly."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    members = {
        "source_train": (dataset.source_train.features, dataset.source_train.labels),
        "pair_source": (dataset.pair_pool_source, None),
        "pair_target": (dataset.pair_pool_target, None),
        "source_val": (dataset.source_val.features, dataset.source_val.labels),
        "target_val": (dataset.target_val.features, dataset.target_val.labels),
    }
    written = []
    for name, (features, labels) in members.items():
        path = out_dir / f"{name}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x0", "x1", "label"] if labels is not None else ["x0", "x1"])
            for i in range(features.shape[0]):
                row = [repr(float(features[i, 0])), repr(float(features[i, 1]))]
                if labels is not None:
                    row.append(str(int(labels[i])))
                writer.writerow(row)
        written.append(path)
    return written


def import_csv(in_dir) -> DomainDataset:
    """Rebuild a DomainDataset from :func:`export_csv` output."""
    in_dir = Path(in_dir)
    loaded: dict[str, tuple[np.ndarray, np.ndarray | None]] = {}
    for name, has_labels in _MEMBER_FILES.items():
        path = in_dir / f"{name}.csv"
        if not path.exists():
            raise DomainError(f"missing dataset member file: {path}")
        features = []
        labels = [] if has_labels else None
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            expected = ["x0", "x1", "label"] if has_labels else ["x0", "x1"]
            if header != expected:
                raise DomainError(f"{path}: expected header {expected}, got {header}")
            for row in reader:
                features.append((float(row[0]), float(row[1])))
                if has_labels:
                    labels.append(int(row[2]))
        arr = np.array(features, dtype=np.float64).reshape(-1, 2)
        loaded[name] = (arr, np.array(labels, dtype=np.int64) if has_labels else None)
    return DomainDataset(
        source_train=LabeledSet(*loaded["source_train"]),
        pair_pool_source=loaded["pair_source"][0],
        pair_pool_target=loaded["pair_target"][0],
        source_val=LabeledSet(*loaded["source_val"]),
        target_val=LabeledSet(*loaded["target_val"]),
    )
