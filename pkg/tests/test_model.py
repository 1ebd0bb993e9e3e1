"""MLP init, forward taps, accuracy, and checkpointing."""

import numpy as np
import pytest

from moonshift.data import LabeledSet
from moonshift.errors import ConfigError, ContractError, DomainError, ShapeError
from moonshift.model import (
    Checkpoint,
    MlpSpec,
    accuracy,
    forward,
    init_mlp,
    load_checkpoint,
    model_from_checkpoint,
    predict,
    restore,
    save_checkpoint,
    scores,
    snapshot,
)
from moonshift.objective import paired_mse
from moonshift.rng import make_rng
from moonshift.tensor import Tape, Tensor


def zeroed(model):
    for layer in model.layers:
        layer.weight.values[...] = 0.0
        layer.bias.values[...] = 0.0
    return model


class TestInit:
    def test_paper_architecture_shapes(self):
        model = init_mlp(MlpSpec(sizes=(2, 32, 1), activations=("relu", "sigmoid")))
        shapes = [p.values.shape for p in model.parameters()]
        assert shapes == [(2, 32), (1, 32), (32, 1), (1, 1)]

    def test_he_variance_large_matrix(self):
        model = init_mlp(MlpSpec(sizes=(1000, 1000), activations=("identity",), seed=5))
        var = model.layers[0].weight.values.var()
        expected = 2.0 / 1000.0
        assert 0.9 * expected <= var <= 1.1 * expected

    def test_biases_zero(self):
        model = init_mlp(MlpSpec(seed=3))
        assert not model.layers[0].bias.values.any()
        assert not model.layers[1].bias.values.any()

    def test_same_seed_bitwise_identical(self):
        a = init_mlp(MlpSpec(seed=11))
        b = init_mlp(MlpSpec(seed=11))
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert pa.values.tobytes() == pb.values.tobytes()

    def test_spec_validation(self):
        with pytest.raises(ConfigError):
            MlpSpec(sizes=(2,), activations=()).validate()
        with pytest.raises(ConfigError):
            MlpSpec(sizes=(2, 0), activations=("relu",)).validate()
        with pytest.raises(ConfigError):
            MlpSpec(sizes=(2, 1), activations=("tanh",)).validate()
        with pytest.raises(ConfigError):
            MlpSpec(sizes=(2, 4, 1), activations=("relu",)).validate()


class TestForward:
    def test_zero_weights_sigmoid_outputs_half(self):
        model = zeroed(init_mlp(MlpSpec()))
        out = forward(model, np.zeros((5, 2))).output
        assert np.array_equal(out.values, np.full((5, 1), 0.5))

    def test_batch_shape_contract(self):
        model = init_mlp(MlpSpec(seed=1))
        out = forward(model, make_rng(0).normal(size=(7, 2))).output
        assert out.shape == (7, 1)

    def test_taps_address_the_layers(self):
        model = init_mlp(MlpSpec(seed=2))
        fw = forward(model, make_rng(1).normal(size=(3, 2)))
        assert fw.tap("hidden_0").shape == (3, 32)
        assert fw.tap("output") is fw.output
        assert fw.tap("output_pre").shape == (3, 1)
        # post-activation of the hidden relu is elementwise relu of its pre tap
        pre = fw.tap("hidden_0_pre").values
        assert np.array_equal(fw.tap("hidden_0").values, np.maximum(pre, 0.0))

    def test_unknown_tap_rejected(self):
        model = init_mlp(MlpSpec(seed=2))
        fw = forward(model, np.zeros((1, 2)))
        with pytest.raises(ContractError, match="hidden_0"):
            fw.tap("hidden_7")

    def test_feature_count_mismatch(self):
        model = init_mlp(MlpSpec(seed=2))
        with pytest.raises(ShapeError):
            forward(model, np.zeros((3, 5)))

    def test_forward_pure_bitwise(self):
        model = init_mlp(MlpSpec(seed=4))
        x = make_rng(2).normal(size=(10, 2))
        assert forward(model, x).output.values.tobytes() == \
            forward(model, x).output.values.tobytes()

    def test_da_loss_on_output_tap_reaches_hidden_weights(self):
        model = init_mlp(MlpSpec(seed=5))
        rng = make_rng(3)
        with Tape() as tape:
            phi_s = forward(model, Tensor(rng.normal(size=(6, 2)))).tap("output")
            phi_t = forward(model, Tensor(rng.normal(size=(6, 2)))).tap("output")
            loss = paired_mse(phi_s, phi_t)
        tape.backward(loss)
        assert np.abs(model.layers[0].weight.grad).max() > 0.0


class TestAccuracy:
    def test_perfect_predictions(self):
        model = zeroed(init_mlp(MlpSpec()))
        model.layers[1].bias.values[...] = 100.0  # saturate output to ~1
        labeled = LabeledSet(np.zeros((4, 2)), np.ones(4, dtype=np.int64))
        assert accuracy(model, labeled) == 1.0

    def test_constant_half_output_on_balanced_set(self):
        # ties at exactly 0.5 classify as class 1, so half the labels match
        model = zeroed(init_mlp(MlpSpec()))
        labeled = LabeledSet(np.zeros((10, 2)),
                             np.array([0, 1] * 5, dtype=np.int64))
        assert accuracy(model, labeled) == 0.5

    def test_single_sample(self):
        model = zeroed(init_mlp(MlpSpec()))
        labeled = LabeledSet(np.zeros((1, 2)), np.ones(1, dtype=np.int64))
        assert accuracy(model, labeled) == 1.0

    def test_empty_set_rejected(self):
        model = init_mlp(MlpSpec())
        with pytest.raises(DomainError):
            accuracy(model, LabeledSet(np.zeros((0, 2)), np.zeros(0, dtype=np.int64)))

    def test_argmax_rule_for_softmax_output(self):
        spec = MlpSpec(sizes=(2, 4, 3), activations=("relu", "softmax"), seed=6)
        model = init_mlp(spec)
        x = make_rng(4).normal(size=(20, 2))
        preds = predict(model, x)
        assert preds.shape == (20,)
        assert set(preds.tolist()) <= {0, 1, 2}
        assert np.array_equal(preds, scores(model, x).argmax(axis=1))

    def test_threshold_invariance_under_monotone_rescale(self):
        # decisions depend only on score vs threshold orderings, so doubling
        # all pre-sigmoid logits (monotone) cannot change them
        model = init_mlp(MlpSpec(seed=7))
        x = make_rng(5).normal(size=(50, 2))
        before = predict(model, x)
        for layer in model.layers[-1:]:
            layer.weight.values[...] *= 2.0
            layer.bias.values[...] *= 2.0
        assert np.array_equal(predict(model, x), before)


class TestCheckpoints:
    def test_snapshot_restore_bit_exact(self):
        model = init_mlp(MlpSpec(seed=8))
        ckpt = snapshot(model)
        before = [p.values.copy() for p in model.parameters()]
        for p in model.parameters():
            p.values[...] += 1.0
        restore(model, ckpt)
        for p, orig in zip(model.parameters(), before):
            assert p.values.tobytes() == orig.tobytes()

    def test_snapshot_is_a_copy(self):
        model = init_mlp(MlpSpec(seed=9))
        ckpt = snapshot(model)
        model.layers[0].weight.values[...] = 0.0
        assert ckpt.weights[0].any()

    def test_file_round_trip_bit_exact(self, tmp_path):
        model = init_mlp(MlpSpec(seed=10))
        path = save_checkpoint(model, tmp_path / "ckpt.json")
        loaded = load_checkpoint(path)
        for pa, pb in zip(model.parameters(), loaded.parameters()):
            assert pa.values.tobytes() == pb.values.tobytes()

    def test_doc_round_trip(self):
        model = init_mlp(MlpSpec(seed=12))
        doc = snapshot(model).to_doc()
        rebuilt = model_from_checkpoint(Checkpoint.from_doc(doc))
        for pa, pb in zip(model.parameters(), rebuilt.parameters()):
            assert pa.values.tobytes() == pb.values.tobytes()

    def test_shape_mismatch_rejected(self):
        model = init_mlp(MlpSpec(seed=13))
        other = snapshot(init_mlp(MlpSpec(sizes=(2, 8, 1), activations=("relu", "sigmoid"))))
        with pytest.raises(ShapeError):
            restore(model, other)
