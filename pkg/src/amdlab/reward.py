"""Analytic rewards and the group-relative diagnosis machinery.

Rewards are standardized within a same-prompt group, clipped to [-1, 1],
and turned into per-sample coefficients ``alpha = 1 + s a``,
``beta = 1 - s a`` and a fake-teacher weight ``W = exp(-a)``.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels, worlds
from .errors import ConfigError

KINDS = ("selective", "global", "custom-bumps", "constant")
EPS_ADV = 1e-8


@dataclass(frozen=True)
class RewardLandscape:
    """``favored`` indexes world components (modes), not classes."""

    kind: str = "global"
    favored: tuple = ()
    width: float = 0.5
    penalty: float = 0.0
    value: float = 0.0  # constant kind only

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown reward kind {self.kind!r}; valid: {', '.join(KINDS)}")
        object.__setattr__(self, "favored", tuple(int(i) for i in self.favored))
        if self.kind == "global" and self.favored:
            raise ConfigError("global reward takes no favored-mode set")
        if self.kind in ("selective", "custom-bumps") and not self.favored:
            raise ConfigError(f"{self.kind} reward needs a non-empty favored-mode set")
        if self.width <= 0:
            raise ConfigError(f"bump width must be positive, got {self.width}")
        if self.penalty < 0:
            raise ConfigError("suppression penalty must be >= 0")

    def validate(self, world):
        bad = [i for i in self.favored if not 0 <= i < world.n_components]
        if bad:
            raise ConfigError(f"favored modes {bad} not in world with {world.n_components} modes")
        if self.kind == "selective" and len(set(self.favored)) >= world.n_components:
            raise ConfigError("selective favored set must be a strict subset of the modes")

    def suppressed(self, world):
        return tuple(i for i in range(world.n_components) if i not in self.favored)


def _favored_params(lr, world):
    idx = np.array(lr.favored)
    w = world.weights[idx]
    P = np.linalg.inv(world.covs[idx])
    lognorm = -worlds.LOG_2PI - 0.5 * np.log(np.linalg.det(world.covs[idx]))
    return world.means[idx], P, lognorm, np.log(w / w.sum())


def _selective(lr, world, x):
    means, P, lognorm, logw = _favored_params(lr, world)
    logp, score, _ = kernels.mixture_eval(x, means, P, lognorm, logw)
    return np.maximum(logp, -worlds.ENERGY_SENTINEL), np.where(
        (logp > -worlds.ENERGY_SENTINEL)[:, None], score, 0.0)


def _bumps(lr, world, x):
    mu = world.means[np.array(lr.favored)]
    diff = x[:, None, :] - mu[None]
    e = np.exp(-np.sum(diff * diff, axis=2) / (2.0 * lr.width ** 2))
    return e.sum(axis=1), -np.einsum("bk,bki->bi", e, diff) / lr.width ** 2


def _penalty(lr, world, x):
    """Optional Gaussian dips at suppressed modes (selective kind)."""
    sup = lr.suppressed(world)
    if lr.penalty == 0.0 or not sup:
        return 0.0, 0.0
    mu = world.means[np.array(sup)]
    diff = x[:, None, :] - mu[None]
    e = np.exp(-np.sum(diff * diff, axis=2) / (2.0 * lr.width ** 2))
    return -lr.penalty * e.sum(axis=1), lr.penalty * np.einsum("bk,bki->bi", e, diff) / lr.width ** 2


def eval_reward_and_grad(lr, world, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x.reshape(-1, 2)
    if lr.kind == "global":
        r = -worlds.energy(world, xb)
        lp = worlds.clean_log_density(world, xb)
        g = np.where((lp > -worlds.ENERGY_SENTINEL)[:, None], worlds.clean_score(world, xb), 0.0)
    elif lr.kind == "selective":
        r, g = _selective(lr, world, xb)
        pr, pg = _penalty(lr, world, xb)
        r, g = r + pr, g + pg
    elif lr.kind == "custom-bumps":
        r, g = _bumps(lr, world, xb)
    else:
        r, g = np.full(len(xb), float(lr.value)), np.zeros_like(xb)
    if single:
        return float(r[0]), g[0]
    return r, g


def eval_reward(lr, world, x):
    return eval_reward_and_grad(lr, world, x)[0]


def reward_grad(lr, world, x):
    return eval_reward_and_grad(lr, world, x)[1]


def standardize(rewards, eps_adv=EPS_ADV):
    """Pre-clip advantages (r - mean) / (population std + eps).

    The last axis is the group; leading axes batch independent groups.
    """
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim < 1 or r.shape[-1] < 2:
        raise ConfigError(f"group needs K >= 2 rewards, got {r.shape[-1] if r.ndim else 0}")
    if not eps_adv > 0:
        raise ConfigError("eps_adv must be positive")
    mu = r.mean(axis=-1, keepdims=True)
    sd = r.std(axis=-1, keepdims=True)
    raw = (r - mu) / (sd + eps_adv)
    if r.ndim == 1:
        return raw, float(mu[0]), float(sd[0])
    return raw, mu[..., 0], sd[..., 0]


def group_advantage(rewards, eps_adv=EPS_ADV):
    return np.clip(standardize(rewards, eps_adv)[0], -1.0, 1.0)


@dataclass
class AdvantageGroup:
    cond: object
    samples: np.ndarray
    rewards: np.ndarray
    mean: float
    std: float
    raw: np.ndarray
    advantages: np.ndarray
    eps_adv: float = EPS_ADV

    @property
    def saturation(self):
        """Fraction of samples whose pre-clip advantage was clipped."""
        return float(np.mean(np.abs(self.raw) > 1.0))


def diagnose_group(cond, samples, rewards, eps_adv=EPS_ADV):
    raw, mu, sd = standardize(rewards, eps_adv)
    return AdvantageGroup(cond, np.asarray(samples), np.asarray(rewards, dtype=np.float64),
                          float(mu), float(sd), raw, np.clip(raw, -1.0, 1.0), eps_adv)


@dataclass(frozen=True)
class AdaptiveCoeffs:
    alpha: np.ndarray
    beta: np.ndarray
    s: float


def adaptive_coeffs(adv, s):
    """alpha = 1 + s a, beta = 1 - s a, with alpha + beta == 2 in floating point.

    The coefficient that is >= 1 is computed directly and the other as
    ``2 - c``; that subtraction is exact (Sterbenz), so the sum is exactly 2.
    """
    if not s > 0:
        raise ConfigError(f"sensitivity s must be positive, got {s}")
    a = np.asarray(adv, dtype=np.float64)
    if np.any(np.abs(a) > 1.0):
        raise ConfigError("advantages must lie in [-1, 1]")
    up = 1.0 + s * np.abs(a)
    alpha = np.where(a >= 0, up, 2.0 - up)
    beta = np.where(a >= 0, 2.0 - up, up)
    if alpha.ndim == 0:
        alpha, beta = float(alpha), float(beta)
    return AdaptiveCoeffs(alpha, beta, float(s))


def sharpening_weight(adv):
    """W(a) = exp(-a): heavier denoising weight on low-advantage samples."""
    a = np.asarray(adv, dtype=np.float64)
    w = np.exp(-a)
    return float(w) if w.ndim == 0 else w


def alignment_box(world, factor=1.5):
    """Uniform box ``factor`` times the mode bounding box (same center)."""
    lo, hi = world.means.min(axis=0), world.means.max(axis=0)
    center, half = (lo + hi) / 2.0, (hi - lo) / 2.0
    half = np.maximum(half, 3.0 * np.sqrt(np.max(world.covs[:, [0, 1], [0, 1]])))
    return center - factor * half, center + factor * half


def check_alignment(world, lr, spec, tau, n, rng):
    """Empirical P(E <= gamma' | R > tau) on uniform probes; returns (frequency, delta)."""
    if n < 10_000:
        raise ConfigError(f"alignment check needs n >= 1e4 probes, got {n}")
    lo, hi = alignment_box(world)
    x = rng.uniform(lo, hi, size=(n, 2))
    sel = eval_reward(lr, world, x) > tau
    count = int(sel.sum())
    if count == 0:
        raise ConfigError(f"no probe has reward above tau={tau} (0 of {n})")
    freq = float(np.mean(worlds.energy(world, x[sel]) <= spec.gamma_strict))
    return freq, 1.0 - freq
