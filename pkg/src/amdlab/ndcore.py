"""Dense reverse-mode autodiff for small MLPs, plus SGD/Adam.

Networks are batched: ``forward`` takes an ``(B, n_in)`` array (or a single
vector) and records one tape node per dense layer. ``backward`` replays the
tape in reverse and returns gradients keyed by parameter name (``W0``,
``b0``, ``W1``, ...).
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, NumericError, UsageError

ACTIVATIONS = {"silu": kernels.ACT_SILU, "identity": kernels.ACT_IDENTITY}


class Mlp:
    """Fully connected network with a smooth activation on hidden layers."""

    def __init__(self, widths, weights, biases, activation="silu", name="mlp"):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or any(w <= 0 for w in widths):
            raise ConfigError(f"{name}: layer widths must be >= 2 positive ints, got {widths}")
        if activation not in ACTIVATIONS:
            raise ConfigError(f"{name}: unknown activation {activation!r}")
        if len(weights) != len(widths) - 1 or len(biases) != len(widths) - 1:
            raise ConfigError(f"{name}: expected {len(widths) - 1} weight/bias pairs")
        self.widths = widths
        self.activation = activation
        self.name = name
        self.weights = []
        self.biases = []
        for i, (W, b) in enumerate(zip(weights, biases)):
            W = np.array(W, dtype=np.float64, order="C")
            b = np.array(b, dtype=np.float64).reshape(-1)
            if W.shape != (widths[i], widths[i + 1]) or b.shape != (widths[i + 1],):
                raise ConfigError(
                    f"{name}: layer {i} has W{W.shape}, b{b.shape}; "
                    f"expected ({widths[i]}, {widths[i + 1]}) and ({widths[i + 1]},)"
                )
            self.weights.append(W)
            self.biases.append(b)

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def n_params(self):
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def params(self):
        """Name -> array views (mutating them mutates the net)."""
        out = {}
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{i}"] = W
            out[f"b{i}"] = b
        return out

    def copy(self):
        return Mlp(self.widths, [W.copy() for W in self.weights],
                   [b.copy() for b in self.biases], self.activation, self.name)

    def layer_act(self, i):
        return ACTIVATIONS[self.activation] if i < self.n_layers - 1 else kernels.ACT_IDENTITY

    def all_finite(self):
        return all(np.all(np.isfinite(p)) for p in self.params().values())

    def __repr__(self):
        return f"Mlp({self.name!r}, widths={self.widths}, params={self.n_params})"


def init_mlp(widths, rng, activation="silu", name="mlp", zero_last=False):
    """Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    weights, biases = [], []
    for i in range(len(widths) - 1):
        bound = 1.0 / np.sqrt(widths[i])
        weights.append(rng.uniform(-bound, bound, size=(widths[i], widths[i + 1])))
        biases.append(rng.uniform(-bound, bound, size=widths[i + 1]))
    if zero_last:
        weights[-1][:] = 0.0
        biases[-1][:] = 0.0
    return Mlp(widths, weights, biases, activation, name)


def zeros_mlp(widths, activation="silu", name="mlp"):
    return Mlp(widths, [np.zeros((a, b)) for a, b in zip(widths[:-1], widths[1:])],
               [np.zeros(b) for b in widths[1:]], activation, name)


@dataclass
class TapeNode:
    layer: int
    x: np.ndarray        # layer input
    z: np.ndarray        # pre-activation


@dataclass
class GradTape:
    """Reverse-pass record of one forward call."""

    net: Mlp = None
    nodes: list = field(default_factory=list)
    squeeze: bool = False
    consumed: bool = False

    def record(self, node):
        if self.consumed:
            raise UsageError("tape already consumed by backward()")
        self.nodes.append(node)


def forward(net, x, tape=None):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.ndim != 2 or h.shape[1] != net.widths[0]:
        raise ConfigError(f"{net.name}: input width {h.shape[-1]} != {net.widths[0]}")
    if tape is not None:
        if tape.nodes or tape.consumed:
            raise UsageError("tape must be fresh for a forward pass")
        tape.net, tape.squeeze = net, squeeze
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        with np.errstate(over="ignore", invalid="ignore"):
            # overflow is reported below with the layer index
            z, out = kernels.dense_forward(h, W, b, net.layer_act(i))
        if not np.all(np.isfinite(out)):
            raise NumericError(f"{net.name}: non-finite activation in layer {i}", layer=i)
        if tape is not None:
            tape.record(TapeNode(i, h, z))
        h = out
    return h[0] if squeeze else h


def backward(tape, output_cotangent, wrt_input=False):
    """Gradient of <cotangent, output> w.r.t. every parameter.

    With ``wrt_input`` also returns the input cotangent.
    """
    if tape.consumed:
        raise UsageError("tape reuse after backward()")
    if tape.net is None or len(tape.nodes) != tape.net.n_layers:
        raise UsageError("tape does not hold a completed forward pass")
    net = tape.net
    g = np.asarray(output_cotangent, dtype=np.float64)
    if tape.squeeze:
        g = g[None, :]
    if g.shape != (tape.nodes[-1].z.shape[0], net.widths[-1]):
        raise ConfigError(f"{net.name}: cotangent shape {g.shape} does not match output")
    grads = {}
    for node in reversed(tape.nodes):
        i = node.layer
        g, dW, db = kernels.dense_backward(node.x, net.weights[i], node.z, g, net.layer_act(i))
        grads[f"W{i}"] = dW
        grads[f"b{i}"] = db
    tape.consumed = True
    tape.nodes = []
    if wrt_input:
        return grads, (g[0] if tape.squeeze else g)
    return grads


def value_and_grad(net, x, loss):
    """Run forward, evaluate ``loss(y) -> (value, dvalue/dy)``, backprop."""
    tape = GradTape()
    y = forward(net, x, tape)
    val, dy = loss(y)
    return val, backward(tape, dy)


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer kind {self.kind!r}")
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")


def optimizer_step(state, net, grads, tag=None):
    """Apply one update in place; returns ``(net, state)``.

    Rejects the whole step (nothing mutated) if any gradient is non-finite.
    """
    params = net.params()
    if set(grads) != set(params):
        raise ConfigError(f"{net.name}: gradient keys {sorted(grads)} != params {sorted(params)}")
    for k, g in grads.items():
        if np.shape(g) != params[k].shape:
            raise ConfigError(f"{net.name}: gradient {k} has shape {np.shape(g)}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"{net.name}: non-finite gradient for {k} (iteration {tag})",
                               iteration=tag)
    state.step += 1
    if state.kind == "sgd":
        for k, p in params.items():
            p -= state.lr * grads[k]
    else:
        bc1 = 1.0 - state.beta1 ** state.step
        bc2 = 1.0 - state.beta2 ** state.step
        for k, p in params.items():
            if k not in state.m:
                state.m[k] = np.zeros(p.size)
                state.v[k] = np.zeros(p.size)
            kernels.adam_update(p.reshape(-1), np.reshape(grads[k], -1), state.m[k], state.v[k],
                                state.lr, state.beta1, state.beta2, state.eps, bc1, bc2)
    if not net.all_finite():
        raise NumericError(f"{net.name}: non-finite parameters after step {state.step}",
                           iteration=tag)
    return net, state


def mse_loss(target):
    target = np.asarray(target, dtype=np.float64)

    def loss(y):
        r = y - target
        return float(np.mean(r * r)), 2.0 * r / r.size

    return loss


def grad_check(net, x, loss, probe_count=64, step=1e-5, rng=None):
    """Max relative error between autodiff and central differences.

    Relative error is ``|ad - fd| / max(1, |fd|)`` over ``probe_count``
    randomly chosen scalar parameters (all of them if fewer exist).
    """
    if not 1e-7 <= step <= 1e-3:
        raise ConfigError(f"finite-difference step {step} outside [1e-7, 1e-3]")
    rng = np.random.default_rng(0) if rng is None else rng
    _, grads = value_and_grad(net, x, loss)
    params = net.params()
    index = [(k, j) for k, p in params.items() for j in range(p.size)]
    if probe_count < len(index):
        picks = rng.choice(len(index), size=probe_count, replace=False)
        index = [index[i] for i in sorted(picks)]
    worst = 0.0
    for k, j in index:
        flat = params[k].reshape(-1)
        orig = flat[j]
        flat[j] = orig + step
        up = loss(forward(net, x))[0]
        flat[j] = orig - step
        down = loss(forward(net, x))[0]
        flat[j] = orig
        fd = (up - down) / (2.0 * step)
        ad = grads[k].reshape(-1)[j]
        worst = max(worst, abs(ad - fd) / max(1.0, abs(fd)))
    return worst
