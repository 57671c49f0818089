"""Real teacher (analytic), fake teacher (learned eps-predictor), discriminator.

Class conditioning uses a one-hot vector of width ``n_classes + 1``; the
last slot is the null prompt, i.e. the unconditional mixture.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ndcore, worlds
from .errors import ConfigError, NumericError, RangeError
from .reward import sharpening_weight
from .ndcore import GradTape, OptimizerState, backward, forward, init_mlp, optimizer_step
from .worlds import DEFAULT_CLAMP

TIME_FREQS = np.pi * 2.0 ** np.arange(4)
HIDDEN = (64, 64)


def one_hot(cond, n_classes, batch):
    """(batch, n_classes + 1) one-hot rows; ``None`` selects the null slot."""
    out = np.zeros((batch, n_classes + 1))
    if cond is None:
        out[:, n_classes] = 1.0
        return out
    c = np.broadcast_to(np.asarray(cond), (batch,))
    if np.any((c < 0) | (c >= n_classes)):
        raise ConfigError(f"unknown class in {np.unique(c).tolist()}; world has {n_classes}")
    out[np.arange(batch), c] = 1.0
    return out


def time_features(t, batch):
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (batch,))[:, None]
    return np.concatenate([np.sin(TIME_FREQS * t), np.cos(TIME_FREQS * t)], axis=1)


@dataclass
class RealTeacher:
    """Analytic teacher with optional score blending and time shift.

    ``adapt`` is the current blend weight toward the fake score; ``schedule``
    decays it linearly from ``lambda0`` to zero over the first
    ``decay_fraction`` of training.
    """

    world: worlds.MixtureModel
    lambda0: float = 0.0
    decay_fraction: float = 0.4
    shift: float = 0.0
    clamp: tuple = DEFAULT_CLAMP
    adapt: float = field(default=None)

    def __post_init__(self):
        if not 0.0 <= self.lambda0 <= 1.0:
            raise ConfigError(f"teacher adaptation lambda0={self.lambda0} outside [0, 1]")
        if not -0.5 <= self.shift <= 0.5:
            raise ConfigError(f"noise shift {self.shift} outside [-0.5, 0.5]")
        if self.adapt is None:
            self.adapt = self.lambda0

    def schedule(self, iteration, total):
        horizon = self.decay_fraction * total
        if self.lambda0 == 0.0 or horizon <= 0:
            self.adapt = 0.0 if horizon <= 0 else self.lambda0
            return self.adapt
        self.adapt = self.lambda0 * max(0.0, 1.0 - iteration / horizon)
        return self.adapt

    def shifted(self, state):
        """State re-noised at ``t + shift`` with the same eps (identity when shift is 0)."""
        if self.shift == 0.0:
            return state
        t2 = float(np.clip(state.t + self.shift, *self.clamp))
        return worlds.forward_diffuse(state.clean(), t2, state.eps, self.clamp)


def real_score(rt, state, cond=None, fake=None):
    """Blended score at the (possibly shifted) state; returns ``(score, state_used)``."""
    st = rt.shifted(state)
    s = worlds.noised_score(rt.world, st.x_t, st.t, cond, rt.clamp)
    if rt.adapt > 0.0:
        if fake is None:
            raise ConfigError("teacher adaptation is on but no fake teacher was supplied")
        _, fs = fake_x0(fake, st, cond)
        s = (1.0 - rt.adapt) * s + rt.adapt * fs
    return s, st


def real_x0(rt, state, cond=None, fake=None):
    s, st = real_score(rt, state, cond, fake)
    return worlds.tweedie_denoise(st.x_t, st.t, s, rt.clamp)


def cfg_displacements(rt, x, state, c, omega, fake=None):
    """(d_cond, d_uncond, d_real) with d_real = d_uncond + omega (d_cond - d_uncond)."""
    if omega < 1.0:
        raise ConfigError(f"CFG scale omega={omega} must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    d_uncond = x - real_x0(rt, state, None, fake)
    d_cond = d_uncond if c is None else x - real_x0(rt, state, c, fake)
    d_real = d_uncond + omega * (d_cond - d_uncond)
    return d_cond, d_uncond, d_real


@dataclass
class FakeTeacher:
    net: ndcore.Mlp
    opt: OptimizerState
    n_classes: int

    @classmethod
    def create(cls, n_classes, rng, lr=1e-3, hidden=HIDDEN):
        widths = [2 + 2 * len(TIME_FREQS) + n_classes + 1, *hidden, 2]
        return cls(init_mlp(widths, rng, name="fake"), OptimizerState("adam", lr), n_classes)

    def features(self, x_t, t, cond):
        x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
        b = x_t.shape[0]
        return np.concatenate([x_t, time_features(t, b), class_rows(cond, self.n_classes, b)], axis=1)


def fake_eps(ft, state, c=None, tape=None):
    single = np.ndim(state.x_t) == 1
    out = forward(ft.net, ft.features(state.x_t, state.t, c), tape)
    return out[0] if single else out


def fake_x0(ft, state, c=None):
    """(x0_hat, fake score) from the eps prediction: x0 = (x_t - (1-t) eps)/t, s = -eps/(1-t).

    ``state.t`` may be a scalar or one time per row.
    """
    t = np.asarray(state.t, dtype=np.float64)
    if np.any(t < worlds.T_MIN) or np.any(t > 1.0):
        raise RangeError(f"t outside [{worlds.T_MIN}, 1]")
    e = fake_eps(ft, state, c)
    x_t = np.asarray(state.x_t, dtype=np.float64)
    tc = t[:, None] if t.ndim == 1 else t
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.where(tc < 1.0, -e / (1.0 - tc), 0.0)
    return (x_t - (1.0 - tc) * e) / tc, score


def fake_loss_grads(ft, x, classes, adv, t, eps):
    """Weighted DSM loss mean_i W(a_i) ||eps_i - eps_hat_i||^2 and its gradients."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    b = x.shape[0]
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (b,))
    w = sharpening_weight(np.broadcast_to(np.asarray(adv, dtype=np.float64), (b,)))
    x_t = t[:, None] * x + (1.0 - t[:, None]) * eps
    tape = GradTape()
    pred = forward(ft.net, ft.features(x_t, t, classes), tape)
    r = pred - eps
    per = np.sum(r * r, axis=1)
    loss = float(np.mean(w * per))
    grads = backward(tape, (2.0 / b) * w[:, None] * r)
    return loss, grads


def class_rows(classes, n_classes, b):
    """One-hot rows for per-sample classes; ``None`` or -1 marks the null prompt."""
    if classes is None:
        return one_hot(None, n_classes, b)
    c = np.broadcast_to(np.asarray(classes), (b,))
    if np.any(c >= n_classes) or np.any(c < -1):
        raise ConfigError(f"unknown class in {np.unique(c).tolist()}; world has {n_classes}")
    out = np.zeros((b, n_classes + 1))
    null = c < 0
    out[np.arange(b)[~null], c[~null]] = 1.0
    out[null, n_classes] = 1.0
    return out


def fake_update(ft, x, classes, adv, rng, tag=None, clamp=DEFAULT_CLAMP):
    """One optimizer step on the weighted DSM loss with fresh (t, eps); returns the pre-step loss."""
    adv = np.asarray(adv, dtype=np.float64)
    if np.any(np.abs(adv) > 1.0):
        raise ConfigError("advantages must lie in [-1, 1]")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    b = x.shape[0]
    t = rng.uniform(clamp[0], clamp[1], size=b)
    eps = rng.standard_normal((b, 2))
    loss, grads = fake_loss_grads(ft, x, classes, adv, t, eps)
    if not np.isfinite(loss):
        raise NumericError(f"non-finite fake-teacher loss (iteration {tag})", iteration=tag)
    optimizer_step(ft.opt, ft.net, grads, tag)
    return loss


@dataclass
class Discriminator:
    net: ndcore.Mlp
    opt: OptimizerState

    @classmethod
    def create(cls, rng, lr=1e-3, hidden=HIDDEN):
        return cls(init_mlp([2, *hidden, 1], rng, name="disc"), OptimizerState("adam", lr))


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def discriminator_loss_grads(d, real, fake):
    real = np.atleast_2d(real)
    fake = np.atleast_2d(fake)
    if real.shape[0] == 0 or fake.shape[0] == 0:
        raise ConfigError("discriminator batches must be non-empty")
    nr, nf = real.shape[0], fake.shape[0]
    tape = GradTape()
    logit = forward(d.net, np.concatenate([real, fake]), tape)[:, 0]
    lr_, lf = logit[:nr], logit[nr:]
    loss = 0.5 * (np.mean(_softplus(-lr_)) + np.mean(_softplus(lf)))
    dl = np.concatenate([-(1.0 - _sigmoid(lr_)) / (2 * nr), _sigmoid(lf) / (2 * nf)])
    return float(loss), backward(tape, dl[:, None])


def discriminator_update(d, real, fake, tag=None):
    """One BCE step (real -> 1, student -> 0); returns the pre-step loss."""
    loss, grads = discriminator_loss_grads(d, real, fake)
    optimizer_step(d.opt, d.net, grads, tag)
    return loss


def adversarial_force(d, x, table_sign=False):
    """grad_x(-log D(x)) = -(1 - sigmoid(l)) grad_x l.

    ``table_sign`` flips to the +grad_x log D(x) form.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    tape = GradTape()
    logit = forward(d.net, xb, tape)
    _, dx = backward(tape, np.ones_like(logit), wrt_input=True)
    f = -(1.0 - _sigmoid(logit)) * dx
    if table_sign:
        f = -f
    return f[0] if single else f
