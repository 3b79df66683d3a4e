"""Small MLP with optional LayerNorm, sparse init and hand-written backprop.

All parameters of a network live in one flat float64 vector. The layout is a
pure function of the :class:`NetworkSpec`, so every per-parameter statistic
(gradient, eligibility trace, Adam moments) can be stored in an array that is
index-aligned with the weights.

Hidden layer ``i`` computes ``act(LN(W_i h + b_i))`` (LayerNorm optional per
layer); the output layer is linear. With ``atoms > 1`` the output is an
``(actions, atoms)`` array of logits, otherwise an ``(actions,)`` vector.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, NumericFault, UsageError

LN_EPS = 1e-5
LEAKY_SLOPE = 0.01
ACTIVATIONS = ("leaky_relu", "relu", "tanh")


@dataclass(frozen=True)
class NetworkSpec:
    """Static description of an MLP.

    ``layer_norm`` may be a single bool applied to every hidden layer or a
    tuple with one flag per hidden layer.
    """

    input_dim: int
    hidden_dims: tuple[int, ...] = (64, 64)
    actions: int = 2
    atoms: int = 1
    layer_norm: bool | tuple[bool, ...] = True
    sparsity: float = 0.9
    activation: str = "leaky_relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if isinstance(self.layer_norm, (bool, np.bool_)):
            flags = (bool(self.layer_norm),) * len(self.hidden_dims)
        else:
            flags = tuple(bool(f) for f in self.layer_norm)
        object.__setattr__(self, "layer_norm", flags)
        if self.input_dim < 1 or self.actions < 1 or self.atoms < 1:
            raise ConfigurationError(f"dimensions must be positive: {self}")
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigurationError(f"hidden widths must be positive: {self.hidden_dims}")
        if len(flags) != len(self.hidden_dims):
            raise ConfigurationError("layer_norm needs one flag per hidden layer")
        if not 0.0 <= self.sparsity < 1.0:
            raise ConfigurationError(f"sparsity must lie in [0, 1), got {self.sparsity}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")

    @property
    def output_dim(self) -> int:
        return self.actions * self.atoms

    @property
    def param_count(self) -> int:
        return _layout(self).size


@dataclass(frozen=True)
class _Layer:
    fan_in: int
    fan_out: int
    w: slice
    b: slice
    gain: slice | None
    shift: slice | None


@dataclass(frozen=True)
class _Layout:
    layers: tuple[_Layer, ...]
    size: int


@functools.lru_cache(maxsize=256)
def _layout(spec: NetworkSpec) -> _Layout:
    widths = [spec.input_dim, *spec.hidden_dims, spec.output_dim]
    flags = [*spec.layer_norm, False]
    layers = []
    pos = 0
    for fan_in, fan_out, ln in zip(widths[:-1], widths[1:], flags):
        w = slice(pos, pos + fan_in * fan_out)
        pos = w.stop
        b = slice(pos, pos + fan_out)
        pos = b.stop
        gain = shift = None
        if ln:
            gain = slice(pos, pos + fan_out)
            shift = slice(pos + fan_out, pos + 2 * fan_out)
            pos = shift.stop
        layers.append(_Layer(fan_in, fan_out, w, b, gain, shift))
    return _Layout(tuple(layers), pos)


def param_count(spec: NetworkSpec) -> int:
    """Total number of scalars in a ParamVector for ``spec``."""
    return _layout(spec).size


def zeros_like_params(spec: NetworkSpec) -> np.ndarray:
    return np.zeros(param_count(spec))


def sparse_zero_count(sparsity: float, fan_in: int) -> int:
    # the epsilon keeps products like 0.29 * 100 from flooring to 28
    return int(math.floor(sparsity * fan_in + 1e-9))


def init_sparse(spec: NetworkSpec, seed: int) -> np.ndarray:
    """Sparse LeCun-uniform initialisation.

    Every weight is drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); then for
    each unit exactly ``floor(sparsity * fan_in)`` of its incoming weights,
    chosen uniformly without replacement, are set to zero. Biases and
    LayerNorm shifts start at 0 and LayerNorm gains at 1.
    """
    layout = _layout(spec)
    rng = np.random.default_rng(seed)
    params = np.zeros(layout.size)
    for layer in layout.layers:
        bound = 1.0 / math.sqrt(layer.fan_in)
        w = rng.uniform(-bound, bound, size=(layer.fan_out, layer.fan_in))
        n_zero = sparse_zero_count(spec.sparsity, layer.fan_in)
        if n_zero:
            for row in w:
                row[rng.permutation(layer.fan_in)[:n_zero]] = 0.0
        params[layer.w] = w.ravel()
        if layer.gain is not None:
            params[layer.gain] = 1.0
    return params


def unpack(spec: NetworkSpec, params: np.ndarray) -> list[dict[str, np.ndarray]]:
    """Views of ``params`` per layer: keys ``w`` (fan_out x fan_in), ``b`` and optional ``gain``/``shift``."""
    out = []
    for layer in _layout(spec).layers:
        views = {
            "w": params[layer.w].reshape(layer.fan_out, layer.fan_in),
            "b": params[layer.b],
        }
        if layer.gain is not None:
            views["gain"] = params[layer.gain]
            views["shift"] = params[layer.shift]
        out.append(views)
    return out


def _activate(name: str, y: np.ndarray) -> np.ndarray:
    if name == "leaky_relu":
        return np.maximum(y, LEAKY_SLOPE * y)
    if name == "relu":
        return np.maximum(y, 0.0)
    return np.tanh(y)


def _activation_grad(name: str, y: np.ndarray, h: np.ndarray) -> np.ndarray:
    if name == "leaky_relu":
        return np.where(y > 0, 1.0, LEAKY_SLOPE)
    if name == "relu":
        return (y > 0).astype(np.float64)
    return 1.0 - h * h


@dataclass
class ForwardCache:
    """Intermediates from one forward pass, consumed by :func:`backward`."""

    params: np.ndarray
    obs: np.ndarray
    inputs: list[np.ndarray]
    pre_act: list[np.ndarray]
    post_act: list[np.ndarray]
    xhat: list[np.ndarray | None]
    inv_std: list[float | None]


def forward(spec: NetworkSpec, params: np.ndarray, obs) -> tuple[np.ndarray, ForwardCache]:
    """Evaluate the network on a single observation.

    Returns the outputs, shaped ``(actions,)`` for a scalar head or
    ``(actions, atoms)`` (raw logits) for a distributional head, together
    with the cache needed by :func:`backward`.
    """
    layout = _layout(spec)
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (spec.input_dim,):
        raise UsageError(f"observation shape {obs.shape} != ({spec.input_dim},)")
    if params.shape != (layout.size,):
        raise UsageError(f"param vector length {params.shape} != ({layout.size},)")

    inputs, pre_act, post_act, xhats, invs = [], [], [], [], []
    h = obs
    last = len(layout.layers) - 1
    for i, layer in enumerate(layout.layers):
        inputs.append(h)
        w = params[layer.w].reshape(layer.fan_out, layer.fan_in)
        a = w @ h + params[layer.b]
        if i == last:
            h = a
            break
        if layer.gain is not None:
            centered = a - a.sum() / layer.fan_out
            inv = 1.0 / math.sqrt(float(centered @ centered) / layer.fan_out + LN_EPS)
            xhat = centered * inv
            y = params[layer.gain] * xhat + params[layer.shift]
        else:
            xhat, inv, y = None, None, a
        h = _activate(spec.activation, y)
        pre_act.append(y)
        post_act.append(h)
        xhats.append(xhat)
        invs.append(inv)

    cache = ForwardCache(params.copy(), obs.copy(), inputs, pre_act, post_act, xhats, invs)
    if not np.isfinite(h).all():
        raise NumericFault("non-finite network output", layer=_first_bad_layer(cache, h))
    if spec.atoms > 1:
        h = h.reshape(spec.actions, spec.atoms)
    return h, cache


def _first_bad_layer(cache: ForwardCache, out: np.ndarray) -> int:
    for i, h in enumerate(cache.post_act):
        if not np.isfinite(h).all():
            return i
    return len(cache.post_act)


def backward(spec: NetworkSpec, params: np.ndarray, cache: ForwardCache, output_grad) -> np.ndarray:
    """Vector-Jacobian product: gradient of ``sum(output_grad * outputs)`` w.r.t. params.

    ``output_grad`` one-hot at action ``a`` yields the value sensitivity
    ``grad_w q(s, a, w)``; a loss gradient w.r.t. the outputs yields the loss
    gradient w.r.t. the weights.
    """
    if cache.params.shape != params.shape or not np.array_equal(cache.params, params):
        raise UsageError("stale forward cache: params changed since the forward pass")
    layout = _layout(spec)
    g_out = np.asarray(output_grad, dtype=np.float64).reshape(-1)
    if g_out.shape != (spec.output_dim,):
        raise UsageError(f"output_grad has {g_out.size} entries, expected {spec.output_dim}")

    grad = np.zeros(layout.size)
    delta = g_out
    for i in range(len(layout.layers) - 1, -1, -1):
        layer = layout.layers[i]
        if i < len(layout.layers) - 1:
            dy = delta * _activation_grad(spec.activation, cache.pre_act[i], cache.post_act[i])
            if layer.gain is not None:
                xhat = cache.xhat[i]
                grad[layer.gain] = dy * xhat
                grad[layer.shift] = dy
                dxhat = dy * params[layer.gain]
                n = layer.fan_out
                delta = cache.inv_std[i] * (dxhat - dxhat.sum() / n - xhat * (dxhat @ xhat) / n)
            else:
                delta = dy
        grad[layer.w] = np.outer(delta, cache.inputs[i]).ravel()
        grad[layer.b] = delta
        if i > 0:
            w = params[layer.w].reshape(layer.fan_out, layer.fan_in)
            delta = w.T @ delta
    return grad


def matched_hidden_width(base_spec: NetworkSpec, target_param_count: int) -> NetworkSpec:
    """Resize the last hidden layer so the parameter count matches ``target_param_count``.

    The count is affine in the last hidden width ``h``, growing by
    :func:`row_size` per unit. We return the largest ``h`` whose count does
    not exceed ``target_param_count + row_size``, so the result overshoots the
    target by at most one row.
    """
    if not base_spec.hidden_dims:
        raise ConfigurationError("matched_hidden_width needs at least one hidden layer")
    one = replace(base_spec, hidden_dims=(*base_spec.hidden_dims[:-1], 1))
    two = replace(base_spec, hidden_dims=(*base_spec.hidden_dims[:-1], 2))
    per_unit = param_count(two) - param_count(one)
    fixed = param_count(one) - per_unit
    width = (int(target_param_count) + per_unit - fixed) // per_unit
    if width < 1:
        raise ConfigurationError(
            f"target {target_param_count} is more than one row below the minimal count {param_count(one)}"
        )
    return replace(base_spec, hidden_dims=(*base_spec.hidden_dims[:-1], width))


def row_size(spec: NetworkSpec) -> int:
    """Parameters added by one extra unit in the last hidden layer."""
    base = replace(spec, hidden_dims=(*spec.hidden_dims[:-1], 1))
    return param_count(replace(base, hidden_dims=(*spec.hidden_dims[:-1], 2))) - param_count(base)

