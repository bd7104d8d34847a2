import numpy as np
import pytest
import torch

from cprlab.denoiser import ChannelAutoencoder, FusionNetwork, build_model
from cprlab.errors import InvalidInputError, ShapeError
from cprlab.layers import (
    DTYPE,
    AdamState,
    LayerParams,
    adam_step,
    concat_channels,
    conv1d,
    dense,
    grad_check,
    layer_backward,
    mae_loss,
    maxpool1d,
    relu,
    upsample1d,
)


def t(values):
    return torch.tensor(values, dtype=DTYPE)


def conv_with(kernel, bias=0.0):
    p = LayerParams("conv1d", 1, 1, len(kernel))
    with torch.no_grad():
        p.weight.copy_(t(kernel).reshape(1, 1, -1))
        p.bias.fill_(bias)
    return p


class TestConv1d:
    def test_hand_example(self):
        out = conv1d(t([[[1.0, 2.0, 3.0]]]), conv_with([1.0, 0.0, -1.0]))
        np.testing.assert_array_equal(out.detach().numpy().ravel(), [-2.0, -2.0, 2.0])

    def test_identity_kernel(self, rng):
        x = t(rng.standard_normal((2, 1, 16)))
        torch.testing.assert_close(conv1d(x, conv_with([0.0, 1.0, 0.0])), x)

    def test_shape_error_names_shapes(self):
        p = LayerParams("conv1d", 3, 4, 5)
        with pytest.raises(ShapeError, match=r"\(2, 2, 8\).*\(4, 3, 5\)"):
            conv1d(torch.zeros(2, 2, 8, dtype=DTYPE), p)

    def test_even_kernel_rejected(self):
        with pytest.raises(InvalidInputError):
            LayerParams("conv1d", 1, 1, 4)

    def test_gradients_match_finite_differences(self, rng):
        x = t(rng.standard_normal((2, 3, 10)))
        w = t(rng.standard_normal((4, 3, 5)))
        b = t(rng.standard_normal(4))
        p = LayerParams("conv1d", 3, 4, 5)

        def fragment(x, w, b):
            return torch.nn.functional.conv1d(x, w, b, padding=2).pow(2).sum()

        report = grad_check(fragment, [x, w, b], tolerance=1e-6)
        assert report.passed, report

        g = t(rng.standard_normal((2, 4, 10)))
        with torch.no_grad():
            p.weight.copy_(w)
            p.bias.copy_(b)
        dx, dw, db = layer_backward(conv1d, x, p, g)
        assert dx.shape == x.shape and dw.shape == w.shape and db.shape == b.shape
        torch.testing.assert_close(db, g.sum(dim=(0, 2)))


class TestPoolingAndUpsampling:
    def test_maxpool_example(self):
        out, idx = maxpool1d(t([[[1.0, 3.0, 2.0, 5.0]]]), 2)
        np.testing.assert_array_equal(out.numpy().ravel(), [3.0, 5.0])
        np.testing.assert_array_equal(idx.numpy().ravel(), [1, 3])

    def test_pool_one_is_identity(self, rng):
        x = t(rng.standard_normal((1, 2, 6)))
        torch.testing.assert_close(maxpool1d(x, 1)[0], x)

    def test_maxpool_length_must_divide(self):
        with pytest.raises(ShapeError):
            maxpool1d(torch.zeros(1, 1, 5, dtype=DTYPE), 2)

    def test_maxpool_gradient_routes_to_argmax(self):
        x = t([[[1.0, 3.0, 2.0, 5.0, 0.5, 0.1]]]).requires_grad_(True)
        out, _ = maxpool1d(x, 2)
        (grad,) = torch.autograd.grad(out.sum(), x)
        np.testing.assert_array_equal(grad.numpy().ravel(), [0, 1, 0, 1, 1, 0])

    def test_upsample_example(self):
        np.testing.assert_array_equal(upsample1d(t([[[1.0, 2.0]]]), 2).numpy().ravel(), [1, 1, 2, 2])
        x = t([[[4.0, 5.0]]])
        torch.testing.assert_close(upsample1d(x, 1), x)

    def test_pool_inverts_upsample(self, rng):
        x = t(rng.permutation(40).reshape(2, 2, 10).astype(float))
        torch.testing.assert_close(maxpool1d(upsample1d(x, 3), 3)[0], x)


class TestPointwise:
    def test_relu(self):
        np.testing.assert_array_equal(relu(t([-1.0, 0.0, 2.0])).numpy(), [0.0, 0.0, 2.0])

    def test_dense_identity(self, rng):
        p = LayerParams("dense", 4, 4)
        with torch.no_grad():
            p.weight.copy_(torch.eye(4, dtype=DTYPE))
        x = t(rng.standard_normal((3, 4)))
        torch.testing.assert_close(dense(x, p), x)

    def test_dense_shape_error(self):
        with pytest.raises(ShapeError):
            dense(torch.zeros(3, 5, dtype=DTYPE), LayerParams("dense", 4, 2))

    def test_concat_gradients_split(self, rng):
        a = t(rng.standard_normal((1, 2, 7))).requires_grad_(True)
        b = t(rng.standard_normal((1, 3, 7))).requires_grad_(True)
        out = concat_channels(a, b)
        assert out.shape == (1, 5, 7)
        weights = t(rng.standard_normal((1, 5, 7)))
        ga, gb = torch.autograd.grad((out * weights).sum(), (a, b))
        torch.testing.assert_close(ga, weights[:, :2])
        torch.testing.assert_close(gb, weights[:, 2:])

    def test_concat_length_mismatch(self):
        with pytest.raises(ShapeError):
            concat_channels(torch.zeros(1, 2, 7, dtype=DTYPE), torch.zeros(1, 3, 8, dtype=DTYPE))


class TestMaeLoss:
    def test_example(self):
        assert mae_loss(t([1.0, 2.0]), t([0.0, 0.0])).item() == 1.5

    def test_zero_with_zero_gradient(self):
        pred = t([1.0, -2.0, 3.0]).requires_grad_(True)
        loss = mae_loss(pred, pred.detach().clone())
        (grad,) = torch.autograd.grad(loss, pred)
        assert loss.item() == 0.0
        assert not grad.any()

    def test_masked_half(self, rng):
        pred, target = t(rng.standard_normal(10)), t(rng.standard_normal(10))
        mask = torch.tensor([True, False] * 5)
        expected = (pred - target).abs()[mask].mean()
        torch.testing.assert_close(mae_loss(pred, target, mask), expected)

    def test_fully_masked(self):
        with pytest.raises(InvalidInputError):
            mae_loss(t([1.0]), t([0.0]), torch.tensor([False]))


class TestAdam:
    def test_first_step(self):
        theta = torch.nn.Parameter(t([0.0]))
        state = AdamState.create([theta], lr=1e-3)
        adam_step([theta], [t([1.0])], state)
        assert theta.item() == pytest.approx(-9.99999995e-4, rel=1e-7)
        assert state.t == 1

    def test_zero_gradient(self):
        theta = torch.nn.Parameter(t([0.3, -0.7]))
        state = AdamState.create([theta])
        adam_step([theta], [torch.zeros(2, dtype=DTYPE)], state)
        torch.testing.assert_close(theta.detach(), t([0.3, -0.7]))
        assert state.t == 1

    def test_groups_are_independent(self, rng):
        a0, b0 = rng.standard_normal(3), rng.standard_normal(4)
        a, b = torch.nn.Parameter(t(a0)), torch.nn.Parameter(t(b0))
        joint = torch.nn.Parameter(t(np.concatenate([a0, b0])))
        split_state = AdamState.create([a, b])
        joint_state = AdamState.create([joint])
        for _ in range(3):
            ga, gb = t(rng.standard_normal(3)), t(rng.standard_normal(4))
            adam_step([a, b], [ga, gb], split_state)
            adam_step([joint], [torch.cat([ga, gb])], joint_state)
        torch.testing.assert_close(torch.cat([a, b]).detach(), joint.detach(), rtol=0, atol=1e-15)

    def test_bad_betas(self):
        with pytest.raises(InvalidInputError):
            AdamState.create([torch.nn.Parameter(t([0.0]))], beta1=1.0)

    def test_moments_follow_gradients(self):
        theta = torch.nn.Parameter(t([0.5, -1.0]))
        state = AdamState.create([theta], beta1=0.9, beta2=0.999)
        [(m, v)] = state.moments()
        assert not m.any() and not v.any()

        g = t([0.2, -3.0])
        adam_step([theta], [g], state)
        [(m, v)] = state.moments()
        torch.testing.assert_close(m, 0.1 * g)
        torch.testing.assert_close(v, (1 - 0.999) * g * g)


class TestGradCheck:
    def test_linear_fragment(self, rng):
        a = t(rng.standard_normal((3, 4)))
        x = t(rng.standard_normal(4))
        report = grad_check(lambda a, x: (a @ x).sum(), [a, x], tolerance=1e-9)
        assert report.passed, report

    def test_residual_autoencoder(self, rng):
        generator = torch.Generator().manual_seed(5)
        net = ChannelAutoencoder(generator)
        names = [n for n, _ in net.named_parameters()]
        window = t(rng.standard_normal((1, 1, 64)))

        def fragment(x, *params):
            state = dict(zip(names, params))
            out = torch.func.functional_call(net, state, (x,))
            return (out * out).sum()

        inputs = [window] + [p.detach() for p in net.parameters()]
        report = grad_check(fragment, inputs, tolerance=1e-4, max_checks=200, seed=1)
        assert report.checked > 0
        assert report.passed, report

    def test_corrupted_gradient_fails(self, rng):
        a = t(rng.standard_normal((3, 4)))
        x = t(rng.standard_normal(4))
        fragment = lambda a, x: (a @ x).pow(2).sum()  # noqa: E731
        leaves = [a.clone().requires_grad_(True), x.clone().requires_grad_(True)]
        ga, gx = torch.autograd.grad(fragment(*leaves), leaves)
        ga = ga.clone()
        ga[0, 0] += 1e-2
        report = grad_check(fragment, [a, x], tolerance=1e-6, analytic=[ga, gx])
        assert not report.passed


class Applied(torch.nn.Module):
    """A functional layer bound to its LayerParams, so functional_call can swap the weights"""

    def __init__(self, layer, params):
        super().__init__()
        self.layer = layer
        self.params = params

    def forward(self, x):
        return self.layer(x, self.params)


def module_fragment(module, weights):
    names = [name for name, _ in module.named_parameters()]

    def fragment(x, *params):
        out = torch.func.functional_call(module, dict(zip(names, params)), (x,))
        return (out * weights).sum()

    return fragment, [p.detach() for p in module.parameters()]


@pytest.mark.parametrize("seed", range(10))
class TestGradientsAcrossSeeds:
    def test_conv1d(self, seed):
        rng = np.random.default_rng(seed)
        c_in, c_out, k = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.choice([1, 3, 5]))
        p = LayerParams("conv1d", c_in, c_out, k, generator=torch.Generator().manual_seed(seed))
        fragment, params = module_fragment(Applied(conv1d, p), t(rng.standard_normal((2, c_out, 12))))
        report = grad_check(fragment, [t(rng.standard_normal((2, c_in, 12)))] + params, seed=seed)
        assert report.passed, report

    def test_dense(self, seed):
        rng = np.random.default_rng(seed)
        d_in, d_out = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        p = LayerParams("dense", d_in, d_out, generator=torch.Generator().manual_seed(seed))
        fragment, params = module_fragment(Applied(dense, p), t(rng.standard_normal((2, 7, d_out))))
        report = grad_check(fragment, [t(rng.standard_normal((2, 7, d_in)))] + params, seed=seed)
        assert report.passed, report

    def test_relu(self, seed):
        rng = np.random.default_rng(seed)
        weights = t(rng.standard_normal((2, 3, 16)))
        report = grad_check(lambda x: (relu(x) * weights).sum(), [t(rng.standard_normal((2, 3, 16)))], seed=seed)
        assert report.checked > 0
        assert report.passed, report

    def test_maxpool(self, seed):
        rng = np.random.default_rng(seed)
        pool = int(rng.integers(2, 5))
        weights = t(rng.standard_normal((2, 3, 12 // pool)))
        report = grad_check(lambda x: (maxpool1d(x, pool)[0] * weights).sum(),
                            [t(rng.standard_normal((2, 3, 12)))], seed=seed)
        assert report.passed, report

    def test_upsample(self, seed):
        rng = np.random.default_rng(seed)
        factor = int(rng.integers(1, 4))
        weights = t(rng.standard_normal((2, 3, 8 * factor)))
        report = grad_check(lambda x: (upsample1d(x, factor) * weights).sum(),
                            [t(rng.standard_normal((2, 3, 8)))], seed=seed)
        assert report.passed, report

    def test_concat(self, seed):
        rng = np.random.default_rng(seed)
        weights = t(rng.standard_normal((1, 5, 9)))
        a, b = t(rng.standard_normal((1, 2, 9))), t(rng.standard_normal((1, 3, 9)))
        report = grad_check(lambda a, b: (concat_channels(a, b) * weights).sum(), [a, b], seed=seed)
        assert report.passed, report

    def test_fusion_network(self, seed):
        rng = np.random.default_rng(seed)
        fusion = FusionNetwork(torch.Generator().manual_seed(seed))
        fragment, params = module_fragment(fusion, t(rng.standard_normal((2, 5, 11))))
        report = grad_check(fragment, [t(rng.standard_normal((2, 5, 11)))] + params, seed=seed)
        assert report.passed, report

    def test_full_model(self, seed):
        rng = np.random.default_rng(seed)
        model = build_model(seed=seed, window=16)
        model.fusion = FusionNetwork(torch.Generator().manual_seed(seed + 100))
        fragment, params = module_fragment(model, t(rng.standard_normal((1, 5, 16))))
        report = grad_check(fragment, [t(rng.standard_normal((1, 5, 16)))] + params, max_checks=40, seed=seed)
        assert report.checked > 0
        assert report.passed, report
