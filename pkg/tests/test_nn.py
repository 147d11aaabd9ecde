import itertools

import numpy as np
import pytest

from dirfocus.nn import (
    Adam,
    BatchNorm,
    Conv,
    EarlyStopping,
    Linear,
    Module,
    Parameter,
    ReduceOnPlateau,
    Tensor,
    TrainConfig,
    functional as F,
    gradcheck,
    set_debug,
)


def conv_loop(x, w, b, stride, pad):
    """Direct nested-loop cross-correlation, the reference for F.conv."""
    nd = w.ndim - 2
    xp = np.pad(x, [(0, 0), (0, 0)] + [(p, p) for p in pad])
    out_sp = [(xp.shape[2 + i] - w.shape[2 + i]) // stride[i] + 1 for i in range(nd)]
    out = np.zeros((x.shape[0], w.shape[0], *out_sp))
    for n in range(x.shape[0]):
        for o in range(w.shape[0]):
            for pos in itertools.product(*(range(s) for s in out_sp)):
                sl = tuple(slice(p * s, p * s + k) for p, s, k in zip(pos, stride, w.shape[2:]))
                out[(n, o) + pos] = np.sum(xp[(n, slice(None)) + sl] * w[o]) + (b[o] if b is not None else 0)
    return out


def projected(t: Tensor, seed=0):
    """Scalar loss <t, R> with a fixed random R, so every output entry matters."""
    R = np.random.default_rng(seed).standard_normal(t.shape)
    return (t * R).sum()


RNG = np.random.default_rng(0)


class TestConv:
    def test_identity_kernel(self):
        x = RNG.standard_normal((2, 1, 7))
        y = F.conv(x, np.ones((1, 1, 1)), np.zeros(1))
        np.testing.assert_array_equal(y.data, x)

    def test_hand_sum(self):
        y = F.conv(np.array([[[1.0, 2, 3, 4]]]), np.array([[[1.0, 1]]]))
        np.testing.assert_array_equal(y.data[0, 0], [3, 5, 7])

    @pytest.mark.parametrize("xs,ws,stride,pad", [
        ((2, 3, 11), (4, 3, 3), (1,), (0,)),
        ((2, 3, 11), (4, 3, 3), (2,), (1,)),
        ((2, 2, 6, 9), (3, 2, 2, 4), (1, 2), (1, 0)),
        ((2, 1, 4, 5, 10), (3, 1, 3, 3, 4), (1, 1, 2), (1, 1, 0)),
    ])
    def test_matches_loop(self, xs, ws, stride, pad):
        x, w, b = RNG.standard_normal(xs), RNG.standard_normal(ws), RNG.standard_normal(ws[0])
        y = F.conv(x, w, b, stride, pad)
        np.testing.assert_allclose(y.data, conv_loop(x, w, b, stride, pad), rtol=1e-12, atol=1e-12)
        expected = tuple((n + 2 * p - k) // s + 1 for n, k, s, p in zip(xs[2:], ws[2:], stride, pad))
        assert y.shape[2:] == expected

    @pytest.mark.parametrize("xs,ws,stride,pad", [
        ((2, 3, 9), (2, 3, 3), 2, 1),
        ((2, 2, 5, 7), (3, 2, 3, 3), 1, (1, 0)),
        ((3, 1, 3, 3, 8), (2, 1, 3, 3, 4), 1, (1, 1, 0)),
    ])
    def test_gradients(self, xs, ws, stride, pad):
        x = Tensor(RNG.standard_normal(xs), requires_grad=True)
        w = Tensor(RNG.standard_normal(ws), requires_grad=True)
        b = Tensor(RNG.standard_normal(ws[0]), requires_grad=True)
        r = gradcheck(lambda: projected(F.conv(x, w, b, stride, pad)), [x, w, b], n_points=10)
        assert r.passed, r

    def test_shape_errors(self):
        with pytest.raises(ValueError, match=r"\(2, 3, 10\).*\(4, 2, 3\)"):
            F.conv(np.zeros((2, 3, 10)), np.zeros((4, 2, 3)))
        with pytest.raises(ValueError):
            F.conv(np.zeros((2, 3, 2)), np.zeros((4, 3, 5)))

    def test_layer_fan_in_init(self):
        layer = Conv(2, 4, (3, 5), np.random.default_rng(0))
        bound = np.sqrt(6 / 30)
        assert layer.weight.shape == (4, 2, 3, 5)
        assert np.abs(layer.weight.data).max() <= bound


class TestBatchNorm:
    def test_standardizes(self):
        x = np.random.default_rng(1).standard_normal((4000, 3, 5)) * 3 + 2
        y = F.batch_norm(x, np.ones(3), np.zeros(3)).data
        assert np.all(np.abs(y.mean(axis=(0, 2))) < 0.05)
        assert np.all(np.abs(y.var(axis=(0, 2)) - 1) < 0.05)

    def test_constant_channel(self):
        x = np.full((8, 2, 4), 5.0)
        y = F.batch_norm(x, np.array([2.0, 3.0]), np.array([0.5, -1.0])).data
        np.testing.assert_allclose(y[:, 0], 0.5)
        np.testing.assert_allclose(y[:, 1], -1.0)

    def test_running_stats_and_eval(self):
        bn = BatchNorm(3)
        x = np.random.default_rng(2).standard_normal((64, 3, 10)) + 4
        for _ in range(50):
            bn(x)
        np.testing.assert_allclose(bn.running_mean, x.mean(axis=(0, 2)), rtol=1e-2)
        bn.eval()
        a, b = bn(x).data, bn(x).data
        assert np.array_equal(a, b)
        before = bn.running_mean.copy()
        bn(x + 10)
        assert np.array_equal(bn.running_mean, before)

    @pytest.mark.parametrize("training", [True, False])
    def test_gradients(self, training):
        x = Tensor(RNG.standard_normal((6, 3, 4)), requires_grad=True)
        g = Tensor(RNG.uniform(0.5, 2, 3), requires_grad=True)
        b = Tensor(RNG.standard_normal(3), requires_grad=True)
        rm, rv = RNG.standard_normal(3), RNG.uniform(0.5, 2, 3)
        fn = lambda: projected(F.batch_norm(x, g, b, rm.copy(), rv.copy(), training=training))
        assert gradcheck(fn, [x, g, b]).passed

    def test_eval_needs_running_stats(self):
        with pytest.raises(ValueError):
            F.batch_norm(np.zeros((2, 1, 3)), np.ones(1), np.zeros(1), training=False)


class TestLayers:
    def test_softmax_uniform(self):
        p = F.softmax(np.zeros((3, 14)))
        np.testing.assert_allclose(p, 1 / 14)

    def test_softmax_sums_to_one(self):
        p = F.softmax(RNG.standard_normal((10, 7)) * 30)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)

    def test_cross_entropy_bounds(self):
        assert F.softmax_cross_entropy(np.array([[1e3, 0.0]]), [0]).data == pytest.approx(0.0, abs=1e-12)
        assert F.softmax_cross_entropy(RNG.standard_normal((5, 3)), [0, 1, 2, 0, 1]).data > 0
        loss, probs = F.softmax_cross_entropy_with_probs(np.zeros((2, 4)), [1, 2])
        assert loss.data == pytest.approx(np.log(4))
        np.testing.assert_allclose(probs, 0.25)

    def test_avgpool_constant(self):
        y = F.avg_pool_time(np.full((2, 3, 9), 4.2)).data
        assert y.shape == (2, 3, 1)
        np.testing.assert_allclose(y, 4.2)

    def test_concat_time_slice(self):
        z = np.zeros((2, 5, 5, 128))
        p = np.ones((2, 5, 5, 1))
        assert F.concat([z, p], axis=-1).shape == (2, 5, 5, 129)

    def test_flatten(self):
        assert F.flatten(np.zeros((3, 2, 4, 1))).shape == (3, 8)

    def test_linear_shape_error(self):
        with pytest.raises(ValueError):
            F.linear(np.zeros((2, 3)), np.zeros((4, 5)))

    def test_layer_gradients(self):
        x = Tensor(RNG.standard_normal((4, 6)), requires_grad=True)
        lin = Linear(6, 3, np.random.default_rng(0))
        assert gradcheck(lambda: projected(lin(x)), [x, lin.weight, lin.bias]).passed
        y = Tensor(RNG.standard_normal((3, 4, 5)), requires_grad=True)
        assert gradcheck(lambda: projected(F.relu(y)), [y]).passed
        assert gradcheck(lambda: projected(F.avg_pool_time(y)), [y]).passed
        assert gradcheck(lambda: projected(F.flatten(y)), [y]).passed
        a = Tensor(RNG.standard_normal((2, 3, 4)), requires_grad=True)
        b = Tensor(RNG.standard_normal((2, 3, 1)), requires_grad=True)
        assert gradcheck(lambda: projected(F.concat([a, b])), [a, b]).passed
        logits = Tensor(RNG.standard_normal((5, 4)), requires_grad=True)
        assert gradcheck(lambda: F.softmax_cross_entropy(logits, [0, 3, 1, 1, 2]), [logits]).passed

    def test_tensor_op_gradients(self):
        a = Tensor(RNG.standard_normal((3, 4)), requires_grad=True)
        b = Tensor(RNG.standard_normal((4,)), requires_grad=True)
        c = Tensor(RNG.standard_normal((4, 2)), requires_grad=True)
        fn = lambda: projected(((a + b) * a - b) @ c) + (a.mean(axis=0) * b).sum()
        assert gradcheck(fn, [a, b, c]).passed
        fn2 = lambda: projected(a.reshape(2, 6).transpose(1, 0))
        assert gradcheck(fn2, [a]).passed


class TestBackward:
    def test_sum_gives_ones(self):
        x = Tensor(RNG.standard_normal((3, 5)), requires_grad=True)
        x.sum().backward()
        np.testing.assert_array_equal(x.grad, np.ones((3, 5)))

    def test_no_graph(self):
        with pytest.raises(RuntimeError):
            Tensor(np.ones(3), requires_grad=True).backward()

    def test_non_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(RuntimeError):
            (x * 2).backward()

    def test_shared_node_accumulates(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        y = x * x
        (y + y).sum().backward()
        np.testing.assert_allclose(x.grad, [8.0])

    def test_debug_catches_nan(self):
        set_debug(True)
        try:
            with pytest.raises(FloatingPointError):
                Tensor(np.array([np.nan]))
        finally:
            set_debug(False)

    def test_gradcheck_detects_wrong_gradient(self):
        x = Tensor(RNG.standard_normal(5), requires_grad=True)
        bad = lambda: Tensor.from_op((x.data ** 2).sum(), (x,), lambda g: (g * x.data,), "bad")
        assert not gradcheck(bad, [x]).passed
        assert not gradcheck(bad, [x], reject_kinks=True).passed

    def test_kink_rejection(self):
        # inputs within h of the ReLU kink are redrawn, smooth ones checked
        x = Tensor(np.array([3e-6, -4e-6, 0.5, -0.7, 1.2, 2.0, -0.3, 0.9, -1.5, 0.1]), requires_grad=True)
        fn = lambda: F.relu(x).sum()
        assert not gradcheck(fn, [x], n_points=10).passed
        r = gradcheck(fn, [x], n_points=10, reject_kinks=True)
        assert r.passed and r.n_rejected == 2 and r.n_points == 8
        # every coordinate at a kink leaves the tensor under-checked
        y = Tensor(np.array([1e-6, -2e-6]), requires_grad=True)
        assert not gradcheck(lambda: F.relu(y).sum(), [y], reject_kinks=True).passed


class TestAdam:
    def _param(self, value):
        return Parameter(np.array(value, dtype=float))

    def test_zero_lr(self):
        p = self._param([1.0, -2.0])
        opt = Adam([p], lr=0.0)
        p.grad = np.array([3.0, 4.0])
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_moves_against_gradient(self):
        p = self._param([0.0, 0.0])
        opt = Adam([p], lr=0.01)
        for _ in range(100):
            p.grad = np.array([1.0, -1.0])
            opt.step()
        assert p.data[0] < 0 < p.data[1]

    def test_pure_l2_decay(self):
        p = self._param([3.0, -2.0])
        opt = Adam([p], lr=0.01, l2=0.1)
        norms = []
        for _ in range(200):
            p.grad = np.zeros(2)
            opt.step()
            norms.append(np.linalg.norm(p.data))
        assert np.all(np.diff(norms) < 0)

    def test_quadratic_bowl(self):
        A = np.array([[3.0, 0.5], [0.5, 1.0]])
        b = np.array([1.0, -2.0])
        target = np.linalg.solve(A, b)
        p = self._param([5.0, 5.0])
        opt = Adam([p], lr=0.05)
        for step in range(5000):
            p.grad = A @ p.data - b
            opt.step()
            if step > 2000:
                opt.lr = 0.005
        assert np.abs(p.data - target).max() < 1e-6

    def test_plateau_halves(self):
        opt = Adam([self._param([0.0])], lr=1.0)
        sched = ReduceOnPlateau(opt, patience=3, factor=0.5)
        sched.step(1.0)
        for _ in range(3):
            sched.step(2.0)
        assert opt.lr == 0.5

    def test_early_stopping(self):
        stop = EarlyStopping(patience=2)
        assert stop.step(0.5, 0) == (True, False)
        assert stop.step(0.5, 1) == (False, False)
        assert stop.step(0.4, 2) == (False, True)
        assert stop.best_epoch == 0


class TestTrainConfig:
    def test_round_trip(self):
        cfg = TrainConfig(learning_rate=1e-3, batch_size=8)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("bad", [{"learning_rate": 0}, {"lr_decay": 1.5}, {"batch_size": 0},
                                     {"max_epochs": 0}, {"lr_decay": 0}])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


class TestModule:
    def test_registration(self):
        class Net(Module):
            def __init__(self):
                super().__init__()
                rng = np.random.default_rng(0)
                self.a = Linear(3, 2, rng)
                self.bn = BatchNorm(2)

        net = Net()
        names = [n for n, _ in net.named_parameters()]
        assert names == ["a.weight", "a.bias", "bn.gamma", "bn.beta"]
        assert [n for n, _ in net.named_buffers()] == ["bn.running_mean", "bn.running_var"]
        assert net.n_parameters() == 3 * 2 + 2 + 4
        net.eval()
        assert not net.bn.training
