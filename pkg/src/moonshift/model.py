"""Multi-layer perceptron with He-normal init and named activation taps.

Taps expose each layer's activations so a DA loss can attach anywhere:
"hidden_k" is the k-th hidden layer post-activation, "output" the final
activation, and a "_pre" suffix selects the pre-activation tensor instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .data import LabeledSet
from .errors import ConfigError, ContractError, DomainError, ShapeError
from .rng import gaussian, make_rng
from .tensor import Tape, Tensor

ACTIVATIONS = ("relu", "sigmoid", "softmax", "identity")


@dataclass(frozen=True)
class MlpSpec:
    """Layer sizes (input first), one activation per weight layer, init seed."""

    sizes: tuple[int, ...] = (2, 32, 1)
    activations: tuple[str, ...] = ("relu", "sigmoid")
    seed: int = 0

    def validate(self) -> None:
        problems = []
        if len(self.sizes) < 2:
            problems.append(f"need input and output sizes, got {self.sizes}")
        if any(s < 1 for s in self.sizes):
            problems.append(f"layer sizes must be positive, got {self.sizes}")
        if len(self.activations) != len(self.sizes) - 1:
            problems.append(
                f"{len(self.sizes) - 1} layers need that many activations, "
                f"got {len(self.activations)}"
            )
        for a in self.activations:
            if a not in ACTIVATIONS:
                problems.append(f"unknown activation {a!r}; choose from {ACTIVATIONS}")
        if problems:
            raise ConfigError(problems)


class Layer:
    __slots__ = ("weight", "bias", "activation")

    def __init__(self, weight: Tensor, bias: Tensor, activation: str):
        self.weight = weight
        self.bias = bias
        self.activation = activation


class MlpModel:
    """Stack of affine layers plus activations; owns the tap registry."""

    def __init__(self, spec: MlpSpec, layers: list[Layer]):
        self.spec = spec
        self.layers = layers
        self.taps = {f"hidden_{i}": i for i in range(len(layers) - 1)}
        self.taps["output"] = len(layers) - 1

    def parameters(self) -> list[Tensor]:
        params = []
        for layer in self.layers:
            params.append(layer.weight)
            params.append(layer.bias)
        return params

    def parameter_names(self) -> list[str]:
        names = []
        for i in range(len(self.layers)):
            names.extend([f"w{i}", f"b{i}"])
        return names

    def tap_names(self) -> list[str]:
        names = list(self.taps)
        return names + [f"{n}_pre" for n in names]


def init_mlp(spec: MlpSpec) -> MlpModel:
    """He-normal weights (variance 2/fan_in), zero biases, seed-deterministic."""
    spec.validate()
    rng = make_rng(spec.seed)
    layers = []
    for fan_in, fan_out, activation in zip(spec.sizes, spec.sizes[1:], spec.activations):
        std = np.sqrt(2.0 / fan_in)
        weight = Tensor(std * gaussian(rng, fan_in, fan_out))
        bias = Tensor(np.zeros((1, fan_out)))
        layers.append(Layer(weight, bias, activation))
    return MlpModel(spec, layers)


@dataclass
class ForwardPass:
    """Per-layer activations of one forward evaluation, tap-addressable."""

    pre: list[Tensor]
    post: list[Tensor]
    taps: dict[str, int] = field(repr=False)

    @property
    def output(self) -> Tensor:
        return self.post[-1]

    def tap(self, name: str) -> Tensor:
        base, _, suffix = name.partition("_pre")
        if name.endswith("_pre") and base in self.taps:
            return self.pre[self.taps[base]]
        if name in self.taps:
            return self.post[self.taps[name]]
        known = sorted(self.taps) + sorted(f"{n}_pre" for n in self.taps)
        raise ContractError(f"unknown tap {name!r}; known taps: {known}")


_ACT_FNS = {"relu": T.relu, "sigmoid": T.sigmoid, "softmax": T.softmax,
            "identity": lambda t: t}


def forward(model: MlpModel, x: Tensor | np.ndarray, tape: Tape | None = None) -> ForwardPass:
    """Run the net, returning every layer's pre- and post-activation tensors.

    Records on ``tape`` when given, else on whatever tape is already active
    (or none). The returned tensors are the ones feeding later layers, so a
    DA loss on any tap backpropagates into all earlier parameters.
    """
    if not isinstance(x, Tensor):
        x = Tensor(x)
    if x.cols != model.spec.sizes[0]:
        raise ShapeError(
            f"input has {x.cols} features, model expects {model.spec.sizes[0]}"
        )
    if tape is not None:
        with tape:
            return forward(model, x)
    pre: list[Tensor] = []
    post: list[Tensor] = []
    h = x
    for layer in model.layers:
        z = T.add(T.matmul(h, layer.weight), layer.bias)
        h = _ACT_FNS[layer.activation](z)
        pre.append(z)
        post.append(h)
    return ForwardPass(pre=pre, post=post, taps=dict(model.taps))


def scores(model: MlpModel, features: np.ndarray) -> np.ndarray:
    """Eager network outputs for raw features (no tape, no gradients)."""
    return forward(model, Tensor(features)).output.values


def predict(model: MlpModel, features: np.ndarray) -> np.ndarray:
    """Class decisions: output >= 0.5 means class 1 for one-unit outputs
    (ties go to class 1), argmax for wider outputs (ties to the lowest index)."""
    out = scores(model, features)
    if out.shape[1] == 1:
        return (out[:, 0] >= 0.5).astype(np.int64)
    return out.argmax(axis=1).astype(np.int64)


def accuracy(model: MlpModel, labeled: LabeledSet) -> float:
    """Fraction of samples whose decision matches the label."""
    if len(labeled) == 0:
        raise DomainError("accuracy of an empty set")
    return float((predict(model, labeled.features) == labeled.labels).mean())


# --- checkpoints ----------------------------------------------------------


@dataclass
class Checkpoint:
    """Frozen copy of a model's parameters, shapes included."""

    sizes: tuple[int, ...]
    activations: tuple[str, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def to_doc(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "activations": list(self.activations),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @staticmethod
    def from_doc(doc: dict) -> "Checkpoint":
        return Checkpoint(
            sizes=tuple(doc["sizes"]),
            activations=tuple(doc["activations"]),
            weights=[np.array(w, dtype=np.float64) for w in doc["weights"]],
            biases=[np.array(b, dtype=np.float64).reshape(1, -1) for b in doc["biases"]],
        )


def snapshot(model: MlpModel) -> Checkpoint:
    """Copy all parameters out of the model (bit-exact)."""
    return Checkpoint(
        sizes=model.spec.sizes,
        activations=model.spec.activations,
        weights=[layer.weight.values.copy() for layer in model.layers],
        biases=[layer.bias.values.copy() for layer in model.layers],
    )


def restore(model: MlpModel, ckpt: Checkpoint) -> None:
    """Copy checkpoint parameters back into the model (bit-exact)."""
    if ckpt.sizes != model.spec.sizes:
        raise ShapeError(f"checkpoint sizes {ckpt.sizes} != model sizes {model.spec.sizes}")
    for layer, w, b in zip(model.layers, ckpt.weights, ckpt.biases):
        layer.weight.values[...] = w
        layer.bias.values[...] = b


def model_from_checkpoint(ckpt: Checkpoint, seed: int = 0) -> MlpModel:
    spec = MlpSpec(sizes=ckpt.sizes, activations=ckpt.activations, seed=seed)
    model = init_mlp(spec)
    restore(model, ckpt)
    return model


def save_checkpoint(model: MlpModel, path) -> Path:
    """Serialize to JSON; floats use repr so reload is bit-exact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(snapshot(model).to_doc()))
    return path


def load_checkpoint(path) -> MlpModel:
    doc = json.loads(Path(path).read_text())
    return model_from_checkpoint(Checkpoint.from_doc(doc))
