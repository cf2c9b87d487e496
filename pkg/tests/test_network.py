import math

import numpy as np
import pytest

from qneurons import (
    ActivationKind,
    InvalidConfig,
    Network,
    QSampleConfig,
    RngState,
    ShapeMismatch,
    load_checkpoint,
    loss_and_grad,
    mlp_spec,
    mnist_cnn,
    mnist_mlp,
    network_loss,
    save_checkpoint,
    sgd_step,
)
from qneurons.network import (
    ActivationSpec,
    BatchNormSpec,
    Conv2DSpec,
    DenseSpec,
    DropoutSpec,
    FlattenSpec,
    MaxPool2x2Spec,
    QActivationSpec,
    SoftmaxSpec,
    recalibrate_batchnorm,
)

TANH = ActivationKind("tanh")


class TestPresets:
    def test_mlp_layer_sequence_without_dropout(self):
        spec = mnist_mlp(TANH, q_mode="fixed", sample_cfg=QSampleConfig(0.02))
        types = [type(s) for s in spec.layers]
        assert types == [
            DenseSpec, QActivationSpec, BatchNormSpec,
            DenseSpec, QActivationSpec, BatchNormSpec,
            DenseSpec, SoftmaxSpec,
        ]
        assert spec.layers[0].out_dim == 256
        assert spec.layers[3].out_dim == 256
        assert spec.layers[6].out_dim == 10
        assert spec.input_shape == (28, 28)

    def test_mlp_dropout_variant_inserts_after_batchnorm(self):
        spec = mnist_mlp(TANH, dropout=True)
        types = [type(s) for s in spec.layers]
        assert types == [
            DenseSpec, ActivationSpec, BatchNormSpec, DropoutSpec,
            DenseSpec, ActivationSpec, BatchNormSpec, DropoutSpec,
            DenseSpec, SoftmaxSpec,
        ]
        assert all(s.rate == 0.2 for s in spec.layers if isinstance(s, DropoutSpec))

    def test_baseline_mode_has_no_stochastic_layers(self):
        spec = mnist_mlp(TANH, q_mode="baseline")
        assert not any(isinstance(s, QActivationSpec) for s in spec.layers)

    def test_cnn_structure(self):
        spec = mnist_cnn(TANH, q_mode="fixed", sample_cfg=QSampleConfig(0.02))
        conv_features = [s.features for s in spec.layers if isinstance(s, Conv2DSpec)]
        assert conv_features == [32, 32, 64, 64]
        assert sum(isinstance(s, MaxPool2x2Spec) for s in spec.layers) == 2
        assert sum(isinstance(s, QActivationSpec) for s in spec.layers) == 5
        dense = [s.out_dim for s in spec.layers if isinstance(s, DenseSpec)]
        assert dense == [512, 10]
        assert isinstance(spec.layers[-1], SoftmaxSpec)
        assert any(isinstance(s, FlattenSpec) for s in spec.layers)

    def test_cnn_shapes_compose_for_28x28(self):
        net = Network(mnist_cnn(TANH), RngState(0))
        out = net.forward(np.zeros((2, 28, 28, 1), dtype=np.float32), training=False)
        assert out.shape == (2, 10)

    def test_unknown_q_mode_rejected(self):
        with pytest.raises(InvalidConfig):
            mnist_mlp(TANH, q_mode="sometimes")


class TestForward:
    def test_input_shape_checked(self):
        net = Network(mnist_mlp(TANH), RngState(0))
        with pytest.raises(ShapeMismatch):
            net.forward(np.zeros((2, 27, 28), dtype=np.float32))

    def test_deterministic_init(self):
        a = Network(mnist_mlp(TANH), RngState(11))
        b = Network(mnist_mlp(TANH), RngState(11))
        for pa, pb in zip(a.params(), b.params()):
            np.testing.assert_array_equal(pa, pb)


class TestLoss:
    def _toy_net(self, q_mode="baseline"):
        spec = mlp_spec((8,), hidden=5, classes=3, kind=TANH, q_mode=q_mode,
                        sample_cfg=QSampleConfig(0.5) if q_mode != "baseline" else None)
        return Network(spec, RngState(0), dtype=np.float64)

    def test_uniform_predictions_loss_is_log_classes(self):
        net = self._toy_net()
        # zero all weights: logits are zero, probabilities uniform
        for p in net.params():
            p[...] = 0.0
        x = RngState(1).standard_normal((4, 8))
        y = np.array([0, 1, 2, 0])
        loss = network_loss(net, x, y, training=False)
        assert loss == pytest.approx(math.log(3), rel=1e-12)

    def test_uniform_over_ten_classes_is_log_ten(self):
        net = Network(mlp_spec((8,), hidden=5, classes=10, kind=TANH), RngState(0), dtype=np.float64)
        for p in net.params():
            p[...] = 0.0
        x = RngState(1).standard_normal((6, 8))
        y = np.arange(6) % 10
        assert network_loss(net, x, y, training=False) == pytest.approx(
            math.log(10.0), rel=1e-12
        )
        assert math.log(10.0) == pytest.approx(2.302585, abs=1e-6)

    def test_confident_correct_predictions_loss_near_zero(self):
        net = self._toy_net()
        x = RngState(2).standard_normal((3, 8))
        probs = net.forward(x, training=False)
        y = probs.argmax(axis=1)
        # drive the softmax input towards the chosen class
        sm_logits = net.layers[-1].last_logits
        boosted = sm_logits + 50.0 * np.eye(3)[y]
        z = boosted - boosted.max(axis=1, keepdims=True)
        p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
        loss = -np.mean(np.log(p[np.arange(3), y]))
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_labels_out_of_range_rejected(self):
        net = self._toy_net()
        x = RngState(3).standard_normal((2, 8))
        with pytest.raises(InvalidConfig):
            network_loss(net, x, np.array([0, 3]), training=False)

    def test_gradients_match_finite_differences_with_frozen_draws(self):
        net = self._toy_net(q_mode="fixed")
        x = RngState(4).standard_normal((4, 8))
        y = np.array([0, 1, 2, 1])
        _, grads = loss_and_grad(net, x, y, training=True, lambda_now=0.5, rng=RngState(5))
        grads = [g.copy() for g in grads]
        h = 1e-5
        for p, g in zip(net.params(), grads):
            flat = p.reshape(-1)
            gf = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = network_loss(net, x, y, training=True, frozen=True)
                flat[i] = orig - h
                down = network_loss(net, x, y, training=True, frozen=True)
                flat[i] = orig
                fd = (up - down) / (2 * h)
                denom = max(abs(fd), abs(gf[i]), 1e-6)
                assert abs(fd - gf[i]) / denom <= 1e-4


class TestSgd:
    def test_zero_gradients_leave_parameters_unchanged(self):
        net = Network(mlp_spec((4,), hidden=3, classes=2), RngState(0))
        before = [p.copy() for p in net.params()]
        sgd_step(net, [np.zeros_like(p) for p in net.params()], 0.5)
        for b, p in zip(before, net.params()):
            np.testing.assert_array_equal(b, p)

    def test_scalar_update_arithmetic(self):
        net = Network(mlp_spec((1,), hidden=1, classes=2), RngState(0), dtype=np.float64)
        p0 = net.params()[0]
        p0[...] = 1.0
        grads = [np.zeros_like(p) for p in net.params()]
        grads[0][...] = 2.0
        sgd_step(net, grads, 0.1)
        np.testing.assert_allclose(p0, 0.8, rtol=1e-12)

    def test_decay_recurrence_closed_form(self):
        lr = 0.05
        decay = 1.0 - 1e-6
        want = 0.05 * decay ** (10**6)
        for _ in range(10**6):
            lr *= decay
        assert lr == pytest.approx(want, rel=1e-9)
        assert want == pytest.approx(0.05 * math.exp(-1.0), rel=1e-4)
        assert want == pytest.approx(0.018394, abs=1e-6)

    def test_shape_mismatch_rejected(self):
        net = Network(mlp_spec((4,), hidden=3, classes=2), RngState(0))
        with pytest.raises(ShapeMismatch):
            sgd_step(net, [np.zeros((1, 1))] * len(net.params()), 0.1)
        with pytest.raises(ShapeMismatch):
            sgd_step(net, [], 0.1)


class TestCheckpoint:
    def test_roundtrip_preserves_state_and_predictions(self, tmp_path):
        spec = mnist_mlp(TANH, q_mode="fixed", sample_cfg=QSampleConfig(0.02), dropout=True)
        net = Network(spec, RngState(17))
        x = RngState(18).standard_normal((4, 28, 28)).astype(np.float32)
        # move running stats off their init values
        net.forward(x, training=True, lambda_now=0.02, rng=RngState(19))

        path = tmp_path / "net.ckpt"
        save_checkpoint(net, path)
        restored = load_checkpoint(path)

        assert restored.spec == net.spec
        for a, b in zip(net.state_arrays(), restored.state_arrays()):
            np.testing.assert_array_equal(a, b)
        out_a = net.forward(x, training=False, lambda_now=0.02, rng=RngState(20))
        out_b = restored.forward(x, training=False, lambda_now=0.02, rng=RngState(20))
        np.testing.assert_array_equal(out_a, out_b)

    def test_header_is_versioned_and_magic_checked(self, tmp_path):
        from qneurons.errors import BadMagic

        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 64)
        with pytest.raises(BadMagic):
            load_checkpoint(path)

    def test_payload_is_little_endian_in_declaration_order(self, tmp_path):
        import json
        import struct

        net = Network(mlp_spec((3,), hidden=2, classes=2), RngState(1), dtype=np.float32)
        path = tmp_path / "net.ckpt"
        save_checkpoint(net, path)
        raw = path.read_bytes()
        assert raw[:8] == b"QNEURNET"
        version, blob_len = struct.unpack("<II", raw[8:16])
        assert version == 1
        header = json.loads(raw[16 : 16 + blob_len])
        first = net.state_arrays()[0]
        n = first.size
        got = np.frombuffer(
            raw[16 + blob_len : 16 + blob_len + 4 * n], dtype="<f4"
        ).reshape(first.shape)
        np.testing.assert_array_equal(got, first)
        assert header["arrays"][0]["shape"] == list(first.shape)


class TestRecalibration:
    def test_statistics_match_the_calibration_activations(self):
        from qneurons import layers as L
        from qneurons.layers import LayerContext

        spec = mlp_spec((6,), hidden=4, classes=3, kind=TANH)
        net = Network(spec, RngState(0), dtype=np.float64)
        x = RngState(1).standard_normal((512, 6))
        recalibrate_batchnorm(net, x)
        # each batchnorm's running stats must equal the statistics of the
        # activations the preceding layers produce under eval semantics
        h = x.copy()
        ctx = LayerContext(training=False)
        for layer in net.layers:
            if isinstance(layer, L.BatchNorm):
                np.testing.assert_allclose(layer.running_mean, h.mean(axis=0), rtol=1e-10)
                np.testing.assert_allclose(layer.running_var, h.var(axis=0), rtol=1e-10)
            h = layer.forward(h, ctx)
