import numpy as np
import pytest

from autograd import ops
from autograd.nn import Conv2d, FeedForward, LayerNorm, Linear, Module, Parameter, randomize_parameters
from autograd.optim import AdamW
from autograd.tensor import Tape, Tensor


class Tiny(Module):
    def __init__(self, rng):
        self.conv = Conv2d(2, 3, 3, rng)
        self.norm = LayerNorm(3)
        self.heads = [Linear(3, 2, rng), Linear(3, 1, rng, bias=False)]

    def forward(self, x):
        h = self.conv(x).mean(axis=(2, 3))
        h = self.norm(h)
        return self.heads[0](h).sum() + self.heads[1](h).sum()


class TestModule:
    def test_named_parameters_in_assignment_order(self, rng):
        names = [name for name, _ in Tiny(rng).named_parameters()]
        assert names == [
            "conv.weight",
            "conv.bias",
            "norm.gamma",
            "norm.beta",
            "heads.0.weight",
            "heads.0.bias",
            "heads.1.weight",
        ]

    def test_num_parameters(self, rng):
        assert Tiny(rng).num_parameters() == (3 * 2 * 9 + 3) + 6 + (6 + 2) + 3

    def test_same_seed_same_weights(self):
        a = Tiny(np.random.default_rng(7)).state_dict()
        b = Tiny(np.random.default_rng(7)).state_dict()
        assert all(a[k].tobytes() == b[k].tobytes() for k in a)

    def test_load_state_dict_round_trip(self, rng):
        src, dst = Tiny(rng), Tiny(rng)
        dst.load_state_dict(src.state_dict())
        for (_, p), (_, q) in zip(src.named_parameters(), dst.named_parameters()):
            np.testing.assert_array_equal(p.data, q.data)

    def test_load_state_dict_mismatch(self, rng):
        model = Tiny(rng)
        state = model.state_dict()
        del state["norm.beta"]
        with pytest.raises(KeyError):
            model.load_state_dict(state)
        state = model.state_dict()
        state["norm.beta"] = np.zeros(4)
        with pytest.raises(ValueError):
            model.load_state_dict(state)

    def test_astype(self, rng):
        model = Tiny(rng).astype(np.float64)
        assert all(p.dtype == np.float64 for p in model.parameters())

    def test_randomize_parameters(self, rng):
        model = Tiny(rng)
        randomize_parameters(model, rng, scale=0.1)
        assert all(np.abs(p.data).max() <= 0.1 for p in model.parameters())

    def test_conv_default_padding_keeps_extent(self, rng):
        assert Conv2d(1, 2, 5, rng)(Tensor(np.zeros((1, 1, 6, 7)))).shape == (1, 2, 6, 7)

    def test_feed_forward_shape(self, rng):
        assert FeedForward(4, 8, 3, rng)(Tensor(np.zeros((2, 5, 4)))).shape == (2, 5, 3)


class TestAdamW:
    def test_minimizes_quadratic(self):
        class Point(Module):
            def __init__(self):
                self.x = Parameter([3.0, -2.0])

        model = Point()
        opt = AdamW(model, lr=0.1, weight_decay=0.0)
        for _ in range(500):
            opt.zero_grad()
            with Tape() as tape:
                loss = (model.x * model.x).sum()
            tape.backward(loss)
            opt.step()
        np.testing.assert_allclose(model.x.data, [0.0, 0.0], atol=0.1)

    def test_first_step_moves_by_lr(self):
        class Point(Module):
            def __init__(self):
                self.x = Parameter([1.0], dtype=np.float64)

        model = Point()
        opt = AdamW(model, lr=0.01, weight_decay=0.0)
        model.x.grad = np.array([5.0])
        opt.step()
        np.testing.assert_allclose(model.x.data, [0.99], rtol=1e-6)

    def test_decoupled_weight_decay_without_gradient_signal(self):
        class Point(Module):
            def __init__(self):
                self.x = Parameter([2.0], dtype=np.float64)

        model = Point()
        opt = AdamW(model, lr=0.1, weight_decay=0.5)
        model.x.grad = np.array([0.0])
        opt.step()
        np.testing.assert_allclose(model.x.data, [2.0 * (1 - 0.05)])

    def test_state_dict_restores_trajectory(self, rng):
        def run(model, opt, steps):
            for _ in range(steps):
                opt.zero_grad()
                with Tape() as tape:
                    loss = model(Tensor(np.ones((1, 2, 4, 4))))
                    loss = ops.mul(loss, loss)
                tape.backward(loss)
                opt.step()

        seed = np.random.default_rng(3)
        a = Tiny(seed)
        opt_a = AdamW(a, lr=0.01)
        run(a, opt_a, 4)

        b = Tiny(np.random.default_rng(3))
        opt_b = AdamW(b, lr=0.01)
        run(b, opt_b, 2)
        c = Tiny(np.random.default_rng(99))
        c.load_state_dict(b.state_dict())
        opt_c = AdamW(c, lr=0.01)
        opt_c.load_state_dict(opt_b.state_dict())
        run(c, opt_c, 2)

        for name, p in a.named_parameters():
            assert p.data.tobytes() == dict(c.named_parameters())[name].data.tobytes()
