import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamrl import approximator as nn
from streamrl.errors import ConfigurationError, NumericFault, UsageError

from conftest import numeric_grad, random_dense_params, sup_relative_error


def test_param_count_matches_layout():
    spec = nn.NetworkSpec(4, (8, 6), actions=3)
    # (4*8+8) + LN(8+8) + (8*6+6) + LN(6+6) + (6*3+3)
    assert spec.param_count == 40 + 16 + 54 + 12 + 21
    assert nn.param_count(replace(spec, layer_norm=False)) == 40 + 54 + 21


def test_layer_norm_flags_per_layer():
    spec = nn.NetworkSpec(3, (5, 5), layer_norm=(True, False))
    assert spec.layer_norm == (True, False)
    with pytest.raises(ConfigurationError):
        nn.NetworkSpec(3, (5, 5), layer_norm=(True,))


@pytest.mark.parametrize("kwargs", [
    dict(input_dim=0), dict(input_dim=2, hidden_dims=(0,)), dict(input_dim=2, sparsity=1.0),
    dict(input_dim=2, activation="gelu"), dict(input_dim=2, actions=0),
])
def test_bad_spec_rejected(kwargs):
    with pytest.raises(ConfigurationError):
        nn.NetworkSpec(**kwargs)


def test_output_shapes(rng):
    spec = nn.NetworkSpec(3, (7,), actions=2)
    out, _ = nn.forward(spec, nn.init_sparse(spec, 0), rng.normal(size=3))
    assert out.shape == (2,)
    dist = nn.NetworkSpec(3, (7,), actions=2, atoms=5)
    out, _ = nn.forward(dist, nn.init_sparse(dist, 0), rng.normal(size=3))
    assert out.shape == (2, 5)


@pytest.mark.parametrize("sparsity,fan_in,expected", [(0.9, 10, 9), (0.9, 64, 57), (0.29, 100, 29), (0.0, 5, 0)])
def test_sparse_zero_count(sparsity, fan_in, expected):
    assert nn.sparse_zero_count(sparsity, fan_in) == expected


def test_sparse_init_zeros_per_row():
    spec = nn.NetworkSpec(10, (64, 64), actions=4, sparsity=0.9)
    params = nn.init_sparse(spec, 3)
    for layer in nn.unpack(spec, params):
        w = layer["w"]
        fan_in = w.shape[1]
        bound = 1 / math.sqrt(fan_in)
        assert np.all(np.abs(w) <= bound)
        zeros_per_row = (w == 0).sum(axis=1)
        assert np.all(zeros_per_row == nn.sparse_zero_count(0.9, fan_in))
        assert np.all(layer["b"] == 0)
        if "gain" in layer:
            assert np.all(layer["gain"] == 1) and np.all(layer["shift"] == 0)


def test_init_is_seed_deterministic():
    spec = nn.NetworkSpec(5, (16, 16))
    np.testing.assert_array_equal(nn.init_sparse(spec, 7), nn.init_sparse(spec, 7))
    assert not np.array_equal(nn.init_sparse(spec, 7), nn.init_sparse(spec, 8))


def test_forward_is_pure(rng):
    spec = nn.NetworkSpec(4, (8, 8), actions=3)
    params = nn.init_sparse(spec, 1)
    before = params.copy()
    obs = rng.normal(size=4)
    a, _ = nn.forward(spec, params, obs)
    b, _ = nn.forward(spec, params, obs)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(params, before)


@pytest.mark.parametrize("layer_norm", [True, False, (True, False)])
@pytest.mark.parametrize("activation", ["leaky_relu", "tanh"])
def test_backward_matches_finite_differences(rng, layer_norm, activation):
    spec = nn.NetworkSpec(4, (6, 5), actions=3, atoms=2, layer_norm=layer_norm, activation=activation)
    params = random_dense_params(spec, rng)
    obs = rng.normal(size=4)
    out_grad = rng.normal(size=spec.output_dim)
    _, cache = nn.forward(spec, params, obs)
    analytic = nn.backward(spec, params, cache, out_grad)
    assert sup_relative_error(analytic, numeric_grad(spec, params, obs, out_grad)) < 1e-6


def test_backward_is_linear_in_output_grad(rng):
    spec = nn.NetworkSpec(3, (5,), actions=4)
    params = random_dense_params(spec, rng)
    _, cache = nn.forward(spec, params, rng.normal(size=3))
    g1, g2 = rng.normal(size=4), rng.normal(size=4)
    combined = nn.backward(spec, params, cache, 2.0 * g1 - 3.0 * g2)
    parts = 2.0 * nn.backward(spec, params, cache, g1) - 3.0 * nn.backward(spec, params, cache, g2)
    np.testing.assert_allclose(combined, parts, rtol=1e-12, atol=1e-12)


def test_one_hot_output_grad_gives_value_gradient_of_that_action(rng):
    spec = nn.NetworkSpec(3, (5,), actions=3, layer_norm=False)
    params = random_dense_params(spec, rng)
    obs = rng.normal(size=3)
    _, cache = nn.forward(spec, params, obs)
    g = nn.backward(spec, params, cache, [0.0, 1.0, 0.0])
    # only the output row of action 1 (and its bias) gets a nonzero final-layer gradient
    last = nn.unpack(spec, g)[-1]
    assert np.all(last["w"][[0, 2]] == 0) and last["b"].tolist() == [0.0, 1.0, 0.0]


def test_stale_cache_rejected(rng):
    spec = nn.NetworkSpec(3, (4,))
    params = nn.init_sparse(spec, 0)
    _, cache = nn.forward(spec, params, rng.normal(size=3))
    params[0] += 1.0
    with pytest.raises(UsageError):
        nn.backward(spec, params, cache, np.ones(2))


def test_shape_errors(rng):
    spec = nn.NetworkSpec(3, (4,))
    params = nn.init_sparse(spec, 0)
    with pytest.raises(UsageError):
        nn.forward(spec, params, np.zeros(4))
    _, cache = nn.forward(spec, params, np.zeros(3))
    with pytest.raises(UsageError):
        nn.backward(spec, params, cache, np.ones(3))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_output_names_layer():
    spec = nn.NetworkSpec(2, (3, 3), layer_norm=False)
    params = nn.init_sparse(spec, 0)
    layers = nn.unpack(spec, params)
    layers[1]["b"][:] = np.inf
    with pytest.raises(NumericFault) as info:
        nn.forward(spec, params, np.ones(2))
    assert info.value.layer == 1


def test_matched_hidden_width_lands_within_one_row():
    base = nn.NetworkSpec(10, (32, 32), actions=4)
    target = nn.NetworkSpec(10, (32, 32), actions=4, atoms=51).param_count
    matched = nn.matched_hidden_width(base, target)
    assert matched.hidden_dims[0] == 32
    assert matched.hidden_dims[1] > 32
    assert 0 < matched.param_count - target <= nn.row_size(matched)


def test_matched_hidden_width_on_own_count_adds_one_unit():
    base = nn.NetworkSpec(6, (16, 20))
    assert nn.matched_hidden_width(base, base.param_count).hidden_dims == (16, 21)
    assert nn.matched_hidden_width(base, base.param_count - 1).hidden_dims == (16, 20)


def test_matched_hidden_width_rejects_tiny_target():
    with pytest.raises(ConfigurationError):
        nn.matched_hidden_width(nn.NetworkSpec(6, (16, 20)), 5)


@settings(max_examples=30, deadline=None)
@given(
    hidden=st.lists(st.integers(1, 6), min_size=1, max_size=3),
    input_dim=st.integers(1, 4),
    actions=st.integers(1, 3),
    ln=st.booleans(),
    seed=st.integers(0, 2**31 - 1),
)
def test_gradient_property(hidden, input_dim, actions, ln, seed):
    rng = np.random.default_rng(seed)
    spec = nn.NetworkSpec(input_dim, tuple(hidden), actions, layer_norm=ln, activation="tanh")
    params = random_dense_params(spec, rng)
    obs = rng.normal(size=input_dim)
    g_out = rng.normal(size=spec.output_dim)
    _, cache = nn.forward(spec, params, obs)
    analytic = nn.backward(spec, params, cache, g_out)
    assert sup_relative_error(analytic, numeric_grad(spec, params, obs, g_out)) < 1e-4
