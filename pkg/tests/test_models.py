import numpy as np
import pytest

from dirfocus.models import (
    DirectionDecoder,
    FusionBlock,
    LearnableSpatialMapping,
    LsmConfig,
    ModelKind,
    ModelSpec,
    build_model,
)
from dirfocus.nn import Tensor, functional as F, gradcheck, load_checkpoint, save_checkpoint, state_dict
from dirfocus.nn.checkpoint import load_state_dict

KINDS = list(ModelKind)
RNG = np.random.default_rng(0)


def small_spec(kind, **kw):
    base = dict(kind=kind, n_classes=4, window_samples=20, n_channels=32, n_theta=11, cnn_time=5, hidden=6)
    base.update(kw)
    return ModelSpec(**base)


def inputs(spec, batch=4, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((batch, spec.n_channels, spec.window_samples))
    p = rng.standard_normal((batch, spec.n_theta)) if spec.kind.uses_spectrum else None
    return x, p


class TestLsm:
    def _lsm(self, C1=2, C2=3, C=6):
        return LearnableSpatialMapping(LsmConfig(C1, C2, C), np.random.default_rng(1))

    def test_identity_layout(self):
        lsm = self._lsm()
        lsm.kernels.data[...] = np.eye(6)
        x = RNG.standard_normal((1, 6, 5))
        z = lsm.mix(x).data.reshape(1, 2, 3, 5)
        for c1 in range(2):
            for c2 in range(3):
                np.testing.assert_array_equal(z[0, c1, c2], x[0, c2 + 3 * c1])

    def test_identity_through_bn_in_eval(self):
        lsm = self._lsm()
        lsm.kernels.data[...] = np.eye(6)
        lsm.eval()  # running mean 0, var 1: BN is the identity up to eps
        x = RNG.standard_normal((2, 6, 5))
        z = lsm(x).data
        np.testing.assert_allclose(z, x.reshape(2, 2, 3, 5) / np.sqrt(1 + lsm.bn.eps), rtol=1e-12)

    def test_rearrangement_bijective(self):
        lsm = self._lsm()
        x = RNG.standard_normal((3, 6, 7))
        zhat = lsm.bn(lsm.mix(x)).data
        z = lsm(x).data
        assert z.shape == (3, 2, 3, 7)
        np.testing.assert_array_equal(z.reshape(3, 6, 7), zhat)

    def test_matmul_oracle(self):
        lsm = self._lsm(5, 5, 32)
        x = RNG.standard_normal((4, 32, 16))
        G = lsm.kernels.data
        ref = np.einsum("kc,bct->bkt", G, x)
        np.testing.assert_allclose(lsm.mix(x).data, ref, rtol=1e-12, atol=1e-12)
        mu = ref.mean(axis=(0, 2), keepdims=True)
        var = ref.var(axis=(0, 2), keepdims=True)
        bn_ref = (ref - mu) / np.sqrt(var + lsm.bn.eps)
        np.testing.assert_allclose(lsm(x).data, bn_ref.reshape(4, 5, 5, 16), rtol=1e-10, atol=1e-12)

    def test_shape_error(self):
        with pytest.raises(ValueError, match="LSM shape mismatch"):
            self._lsm().mix(np.zeros((1, 5, 4)))

    def test_permutation_equivariance(self):
        lsm = self._lsm(5, 5, 32)
        x = RNG.standard_normal((4, 32, 16))
        perm = RNG.permutation(32)
        a = lsm(x).data
        lsm.kernels.data[...] = lsm.kernels.data[:, perm]
        b = lsm(x[:, perm]).data
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)

    def test_gradients(self):
        lsm = self._lsm(2, 2, 5)
        x = Tensor(RNG.standard_normal((3, 5, 6)), requires_grad=True)
        R = RNG.standard_normal((3, 2, 2, 6))
        fn = lambda: (lsm(x) * R).sum()
        assert gradcheck(fn, [x, lsm.kernels, lsm.bn.gamma, lsm.bn.beta]).passed

    def test_parameter_count_from_checkpoint(self, tmp_path):
        model = build_model(ModelSpec(kind="EegLsmCnn"), 0)
        _, header = load_checkpoint(save_checkpoint(tmp_path / "m", model))
        layout = header["layout"]
        n = sum(int(np.prod(layout[k]["shape"])) for k in ("lsm.kernels", "lsm.bn.gamma", "lsm.bn.beta"))
        assert n == 5 * 5 * 32 + 2 * 5 * 5


class TestFusion:
    def test_time_grows_by_one(self):
        fb = FusionBlock(11, (5, 5), np.random.default_rng(0))
        out = fb(RNG.standard_normal((2, 5, 5, 17)), RNG.standard_normal((2, 11)))
        assert out.shape == (2, 5, 5, 18)

    def test_zero_spectrum_zero_bias(self):
        fb = FusionBlock(11, (4,), np.random.default_rng(0))
        fb.fc.bias.data[...] = 0
        z = RNG.standard_normal((2, 4, 9))
        out = fb(z, np.zeros((2, 11))).data
        np.testing.assert_array_equal(out[..., :9], z)
        assert np.all(out[..., 9] == 0)

    def test_gradients_reach_both_inputs(self):
        fb = FusionBlock(7, (2, 3), np.random.default_rng(0))
        z = Tensor(RNG.standard_normal((3, 2, 3, 5)), requires_grad=True)
        p = Tensor(RNG.standard_normal((3, 7)), requires_grad=True)
        R = RNG.standard_normal((3, 2, 3, 6))
        r = gradcheck(lambda: (fb(z, p) * R).sum(), [z, p, fb.fc.weight, fb.fc.bias])
        assert r.passed, r

    def test_width_mismatch(self):
        fb = FusionBlock(7, (2, 3), np.random.default_rng(0))
        with pytest.raises(ValueError, match="fusion shape mismatch"):
            fb(np.zeros((1, 3, 3, 4)), np.zeros((1, 7)))


class TestArchitectures:
    @pytest.mark.parametrize("kind", KINDS)
    def test_output_shape(self, kind):
        spec = ModelSpec(kind=kind, n_classes=14)
        model = build_model(spec, 0)
        x, p = inputs(spec, batch=3)
        assert model(x, p).shape == (3, 14)

    @pytest.mark.parametrize("kind", KINDS)
    def test_zero_input_uniform_with_zero_biases(self, kind):
        spec = small_spec(kind)
        model = build_model(spec, 0)
        x, p = inputs(spec)
        logits = model(np.zeros_like(x), None if p is None else np.zeros_like(p)).data
        assert np.all(np.isfinite(logits))
        for name, param in model.named_parameters():
            if name.endswith("bias") or name.endswith("beta"):
                param.data[...] = 0
        model.eval()
        probs = F.softmax(model(np.zeros_like(x), None if p is None else np.zeros_like(p)).data)
        np.testing.assert_allclose(probs, 1 / spec.n_classes, atol=1e-12)

    @pytest.mark.parametrize("kind", KINDS)
    def test_full_gradient(self, kind):
        spec = small_spec(kind)
        model = build_model(spec, 1)
        x, p = inputs(spec)
        y = np.arange(4) % spec.n_classes
        model.train()
        fn = lambda: F.softmax_cross_entropy(model(x, p), y)
        r = gradcheck(fn, model.parameters(), n_points=10, rng=np.random.default_rng(1))
        assert r.passed, r

    @pytest.mark.parametrize("kind", KINDS)
    def test_deterministic(self, kind):
        spec = small_spec(kind)
        x, p = inputs(spec)
        a = build_model(spec, 3)(x, p).data
        b = build_model(spec, 3)(x, p).data
        assert np.array_equal(a, b)
        assert not np.array_equal(a, build_model(spec, 4)(x, p).data)

    def test_eeg_cnn_sensitive_to_channel_order(self):
        spec = small_spec("EegCnn")
        model = build_model(spec, 0)
        x, _ = inputs(spec)
        perm = np.random.default_rng(5).permutation(32)
        assert not np.allclose(model(x).data, model(x[:, perm]).data)

    def test_lsm_model_equivariant_with_permuted_kernels(self):
        spec = small_spec("EegLsmCnn")
        model = build_model(spec, 0)
        x, _ = inputs(spec)
        perm = np.random.default_rng(5).permutation(32)
        a = model(x).data
        model.lsm.kernels.data[...] = model.lsm.kernels.data[:, perm]
        np.testing.assert_allclose(model(x[:, perm]).data, a, rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("kind", ["SpEegCnn", "SpEegLsmCnn"])
    def test_controlled_init_matches_eeg_only(self, kind):
        """A silenced fusion block reduces the dual-modal model to its EEG twin.

        With zero fusion weights the appended slice is zero, so the dual
        model equals the EEG-only model (same remaining weights) run on the
        window extended by one zero sample.
        """
        spec = small_spec(kind)
        sp_model = build_model(spec, 2)
        sp_model.fusion.fc.weight.data[...] = 0
        sp_model.fusion.fc.bias.data[...] = 0
        twin_spec = small_spec(ModelKind.parse(kind).eeg_twin, window_samples=spec.window_samples + 1)
        twin = build_model(twin_spec, 9)
        state = {k: v for k, v in state_dict(sp_model).items() if not k.startswith("fusion.")}
        load_state_dict(twin, state)
        sp_model.eval()
        twin.eval()
        x, _ = inputs(spec)
        a = sp_model(x, np.zeros((4, spec.n_theta))).data
        b = twin(np.concatenate([x, np.zeros((4, 32, 1))], axis=2)).data
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)

    def test_spectrum_required(self):
        model = build_model(small_spec("SpEegCnn"), 0)
        x, _ = inputs(model.spec)
        with pytest.raises(ValueError, match="spectrum"):
            model(x)

    def test_input_shape_checked(self):
        model = build_model(small_spec("EegCnn"), 0)
        with pytest.raises(ValueError, match="expected EEG"):
            model(np.zeros((2, 31, 20)))

    def test_spectrum_scaling_keeps_level(self):
        model = build_model(small_spec("SpEegCnn"), 0)
        P = np.abs(RNG.standard_normal((50, 11))) + 0.1
        model.fit_spectrum_scaling(P)
        S = model.prepare_spectrum(P)
        np.testing.assert_allclose(S.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(S.std(axis=0), 1, rtol=1e-12)
        # a uniformly louder spectrum maps to a shifted input, not the same one
        assert np.all(model.prepare_spectrum(4 * P[:1]) > S[:1])

    def test_predict_proba(self):
        spec = small_spec("SpEegLsmCnn")
        model = build_model(spec, 0)
        x, _ = inputs(spec)
        probs = model.predict_proba(x, np.abs(RNG.standard_normal((4, 11))) + 0.1, batch_size=3)
        np.testing.assert_allclose(probs.sum(axis=1), 1, atol=1e-12)
        assert model.training


class TestSpec:
    def test_round_trip(self):
        spec = ModelSpec(kind="SpEegLsmCnn", lsm=LsmConfig(4, 6, 32), conv3d_size=(3, 3, 5))
        again = ModelSpec.from_dict(spec.to_dict())
        assert again == spec
        assert spec.fusion_dim == 24

    def test_parse_kind(self):
        assert ModelKind.parse("Sp-EEG-LSM-CNN") is ModelKind.SP_EEG_LSM_CNN
        assert ModelKind.SP_EEG_CNN.eeg_twin is ModelKind.EEG_CNN
        with pytest.raises(ValueError):
            ModelKind.parse("Deformer")

    @pytest.mark.parametrize("bad", [dict(n_classes=1), dict(window_samples=4),
                                     dict(lsm=LsmConfig(5, 5, 16))])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            ModelSpec(kind="EegLsmCnn", **bad)


def test_checkpoint_round_trip(tmp_path):
    spec = small_spec("SpEegLsmCnn")
    model = build_model(spec, 0)
    model.fit_spectrum_scaling(np.abs(RNG.standard_normal((10, 11))) + 0.1)
    path = save_checkpoint(tmp_path / "ck", model, {"spec": spec.to_dict()})
    raw = np.fromfile(path, dtype="<f8")
    other = build_model(spec, 5)
    state, header = load_checkpoint(path, other)
    assert raw.size == header["n_values"]
    x, p = inputs(spec)
    model.eval(), other.eval()
    assert np.array_equal(model(x, p).data, other(x, p).data)
    assert ModelSpec.from_dict(header["metadata"]["spec"]) == spec
    with pytest.raises(ValueError, match="checkpoint"):
        load_checkpoint(path, build_model(small_spec("SpEegCnn"), 0))
