import math

import numpy as np
import pytest
import torch

from packcool.core.errors import InvalidArgumentError
from packcool.modules.autodiff import DTYPE
from packcool.modules.networks import (
    Mlp,
    PolicyDistribution,
    init_params,
    log_prob,
    policy_mean,
    sample_action,
    std_schedule,
    value_and_input_grads,
    value_forward,
    value_input_grads,
    value_layer_sizes,
    zero_output_layer,
)


def numpy_forward(net: Mlp, x: np.ndarray) -> float:
    for layer in net.layers[:-1]:
        x = np.tanh(layer.weight.detach().numpy() @ x + layer.bias.detach().numpy())
    last = net.layers[-1]
    return float((last.weight.detach().numpy() @ x + last.bias.detach().numpy())[0])


def linear_value(n_x: int, weights: np.ndarray) -> Mlp:
    net = Mlp([2 * n_x, 1])
    with torch.no_grad():
        net.layers[0].weight.copy_(torch.as_tensor(weights, dtype=DTYPE).reshape(1, -1))
        net.layers[0].bias.zero_()
    return net


class TestInitParams:
    def test_same_seed_same_parameters(self):
        a = init_params([6, 5, 1], seed=4)
        b = init_params([6, 5, 1], seed=4)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert torch.equal(pa, pb)

    def test_weights_within_bound_and_zero_bias(self):
        net = init_params([20, 64, 64, 1], seed=0)
        for layer in net.layers:
            assert float(layer.weight.abs().max()) <= 1.0 / math.sqrt(layer.in_features)
            assert float(layer.bias.abs().max()) == 0.0

    def test_zero_output_layer_gives_zero_value(self, rng, make_value_net):
        net = zero_output_layer(make_value_net(5))
        for _ in range(5):
            assert float(value_forward(net, rng.normal(size=5), rng.normal(size=5))) == 0.0

    def test_bad_layer_sizes(self):
        with pytest.raises(InvalidArgumentError):
            Mlp([4])


class TestValueForward:
    def test_single_linear_layer_reads_first_node(self, rng):
        weights = np.zeros(8)
        weights[0] = 1.0
        net = linear_value(4, weights)
        u, w = rng.normal(size=4), rng.normal(size=4)
        assert float(value_forward(net, u, w)) == pytest.approx(u[0], abs=1e-15)

    def test_matches_plain_arithmetic(self, rng, make_value_net):
        for seed in range(5):
            net = make_value_net(6, seed=seed)
            u, w = rng.normal(size=6), rng.normal(size=6)
            expected = numpy_forward(net, np.concatenate([u, w]))
            assert float(value_forward(net, u, w)) == pytest.approx(expected, abs=1e-12)

    def test_batched_shape(self, rng, make_value_net):
        net = make_value_net(3)
        assert value_forward(net, rng.normal(size=(7, 3)), rng.normal(size=(7, 3))).shape == (7,)

    def test_width_mismatch(self, make_value_net):
        with pytest.raises(InvalidArgumentError):
            value_forward(make_value_net(3), np.zeros(3), np.zeros(4))


class TestValueInputGrads:
    def test_linear_in_fluid(self):
        net = linear_value(3, np.concatenate([np.zeros(3), np.ones(3)]))
        g_u, g_w = value_input_grads(net, np.ones(3), np.ones(3))
        assert torch.equal(g_u, torch.zeros(3, dtype=DTYPE))
        assert torch.allclose(g_w, torch.ones(3, dtype=DTYPE))

    def test_zero_network(self, make_value_net):
        g_u, g_w = value_input_grads(zero_output_layer(make_value_net(4)), np.ones(4), np.ones(4))
        assert float(g_u.abs().sum() + g_w.abs().sum()) == 0.0

    def test_against_central_differences(self, rng, make_value_net):
        h = 1e-5
        for seed in range(50):
            net = make_value_net(3, seed=seed)
            x = rng.normal(size=6)
            _, g_u, g_w = value_and_input_grads(net, x[:3], x[3:], create_graph=False)
            analytic = np.concatenate([g_u.numpy(), g_w.numpy()])
            numeric = np.empty(6)
            for i in range(6):
                shift = np.zeros(6)
                shift[i] = h
                plus, minus = x + shift, x - shift
                numeric[i] = (float(value_forward(net, plus[:3], plus[3:])) - float(value_forward(net, minus[:3], minus[3:]))) / (2 * h)
            assert np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))) < 1e-5

    def test_gradient_of_gradient_against_differences(self, rng, make_value_net):
        # d/dphi of ||dV/du||^2, the double-backward path of the HJB loss
        h = 1e-6
        for seed in range(10):
            net = make_value_net(2, seed=seed, hidden=(4, 4))
            u, w = rng.normal(size=2), rng.normal(size=2)

            def objective():
                _, g_u, g_w = value_and_input_grads(net, u, w, create_graph=True)
                return g_u.pow(2).sum() + g_w.pow(2).sum()

            weight = net.layers[0].weight
            analytic = torch.autograd.grad(objective(), weight)[0].detach().numpy()
            for (i, j) in [(0, 0), (1, 2), (3, 3)]:
                with torch.no_grad():
                    weight[i, j] += h
                plus = float(objective())
                with torch.no_grad():
                    weight[i, j] -= 2 * h
                minus = float(objective())
                with torch.no_grad():
                    weight[i, j] += h
                numeric = (plus - minus) / (2 * h)
                assert abs(analytic[i, j] - numeric) / max(1.0, abs(numeric)) < 1e-4


class TestPolicy:
    def test_zero_output_layer_mean(self, rng):
        net = zero_output_layer(init_params(value_layer_sizes(4, [8]), seed=1, output_activation="tanh"))
        assert float(policy_mean(net, rng.normal(size=8))) == 0.0

    def test_mean_is_bounded_and_deterministic(self, rng):
        net = init_params([6, 16, 1], seed=3, output_activation="tanh")
        obs = rng.normal(size=(1000, 6)) * 10
        means = policy_mean(net, obs)
        assert float(means.abs().max()) <= 1.0
        assert torch.equal(means, policy_mean(net, obs))

    @pytest.mark.parametrize("episode, scale", [(0, 0.3), (999, 0.3), (1000, 0.29), (10 ** 6, 0.1)])
    def test_std_schedule(self, episode, scale):
        assert std_schedule(episode) == pytest.approx(scale)

    def test_std_schedule_non_increasing(self):
        values = [std_schedule(e) for e in range(0, 30000, 250)]
        assert all(a >= b for a, b in zip(values, values[1:]))
        assert min(values) >= 0.1 and max(values) <= 0.3

    def test_vanishing_scale_returns_mean(self, rng):
        assert sample_action(PolicyDistribution(mean=0.0, scale=1e-12), rng) == pytest.approx(0.0, abs=1e-9)

    def test_samples_are_clipped_and_centred(self, rng):
        dist = PolicyDistribution(mean=0.0, scale=0.3)
        samples = np.array([sample_action(dist, rng) for _ in range(100000)])
        assert samples.min() >= -1.0 and samples.max() <= 1.0
        assert abs(samples.mean()) < 3 * 0.3 / math.sqrt(100000)

    def test_scale_must_be_positive(self):
        with pytest.raises(InvalidArgumentError):
            PolicyDistribution(mean=0.0, scale=0.0)


class TestLogProb:
    def test_standard_normal_peak(self):
        assert float(log_prob(PolicyDistribution(0.0, 1.0), 0.0)) == pytest.approx(-0.5 * math.log(2 * math.pi))

    def test_maximal_at_mean(self):
        dist = PolicyDistribution(0.3, 0.2)
        at_mean = float(log_prob(dist, 0.3))
        assert all(float(log_prob(dist, a)) < at_mean for a in (-0.5, 0.0, 0.29, 0.31, 0.9))

    def test_gradient_in_mean(self, rng):
        for mean, scale, a in [(0.0, 1.0, 0.5)] + [tuple(x) for x in rng.uniform([-1, 0.1, -1], [1, 0.3, 1], size=(20, 3))]:
            mu = torch.tensor(float(mean), dtype=DTYPE, requires_grad=True)
            (grad,) = torch.autograd.grad(log_prob(PolicyDistribution(mu, float(scale)), float(a)), mu)
            assert float(grad) == pytest.approx((a - mean) / scale ** 2, abs=1e-10)
