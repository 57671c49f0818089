"""Analytic class-conditional 2D Gaussian-mixture worlds.

The forward operator is ``x_t = t * x + (1 - t) * eps``, so the noised
density of a component N(mu, S) is N(t * mu, t^2 S + (1 - t)^2 I). Every
quantity here (densities, scores, posterior means, energies) is closed form.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .errors import ConfigError, NumericError, RangeError

T_MIN, T_MAX = 0.02, 0.98
DEFAULT_CLAMP = (T_MIN, T_MAX)
ENERGY_SENTINEL = 700.0
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class Component:
    label: int
    weight: float
    mean: tuple
    cov: tuple  # ((a, b), (b, c))


class MixtureModel:
    """Immutable mixture; component weights sum to one."""

    def __init__(self, components, name="custom"):
        comps = tuple(components)
        if not comps:
            raise ConfigError("mixture needs at least one component")
        self.components = comps
        self.name = name
        self.weights = np.array([c.weight for c in comps], dtype=np.float64)
        self.means = np.array([c.mean for c in comps], dtype=np.float64).reshape(-1, 2)
        self.covs = np.array([c.cov for c in comps], dtype=np.float64).reshape(-1, 2, 2)
        self.labels = np.array([c.label for c in comps], dtype=np.int64)
        if np.any(self.weights <= 0):
            raise ConfigError("component weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ConfigError(f"component weights sum to {self.weights.sum()!r}, not 1")
        if not np.allclose(self.covs, np.transpose(self.covs, (0, 2, 1))):
            raise ConfigError("covariances must be symmetric")
        for k, S in enumerate(self.covs):
            try:
                np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                raise ConfigError(f"component {k} covariance is not positive-definite") from None
        if self.labels.min() < 0:
            raise ConfigError("class labels must be non-negative")
        self.n_classes = int(self.labels.max()) + 1
        missing = set(range(self.n_classes)) - set(self.labels.tolist())
        if missing:
            raise ConfigError(f"classes without components: {sorted(missing)}")
        self.class_prior = np.array([self.weights[self.labels == c].sum()
                                     for c in range(self.n_classes)])
        self._noised_cache = {}

    @property
    def n_components(self):
        return len(self.components)

    @cached_property
    def scale(self):
        """Typical component standard deviation (for assignment radii)."""
        return float(np.sqrt(np.mean([np.sqrt(np.linalg.det(S)) for S in self.covs])))

    def subset(self, cond):
        """Component indices and renormalized log-weights for a class (or all)."""
        if cond is None:
            idx = np.arange(self.n_components)
        else:
            cond = int(cond)
            if not 0 <= cond < self.n_classes:
                raise ConfigError(f"unknown class {cond}; world has {self.n_classes} classes")
            idx = np.flatnonzero(self.labels == cond)
        w = self.weights[idx]
        return idx, np.log(w / w.sum())

    def noised_params(self, t, cond=None):
        """(means, precisions, log-normalizers, log-weights) of p_t restricted to ``cond``."""
        key = (float(t), cond)
        hit = self._noised_cache.get(key)
        if hit is not None:
            return hit
        idx, logw = self.subset(cond)
        C = t * t * self.covs[idx] + (1.0 - t) ** 2 * np.eye(2)
        det = C[:, 0, 0] * C[:, 1, 1] - C[:, 0, 1] * C[:, 1, 0]
        if np.any(det <= 0):
            raise NumericError(f"noised covariance lost positive-definiteness at t={t}")
        P = np.empty_like(C)
        P[:, 0, 0] = C[:, 1, 1] / det
        P[:, 1, 1] = C[:, 0, 0] / det
        P[:, 0, 1] = -C[:, 0, 1] / det
        P[:, 1, 0] = -C[:, 1, 0] / det
        out = (t * self.means[idx], P, -LOG_2PI - 0.5 * np.log(det), logw, idx)
        if len(self._noised_cache) < 4096:
            self._noised_cache[key] = out
        return out

    def __repr__(self):
        return f"MixtureModel({self.name!r}, components={self.n_components}, classes={self.n_classes})"


def isotropic(label, weight, mean, sigma):
    s2 = float(sigma) ** 2
    return Component(int(label), float(weight), (float(mean[0]), float(mean[1])),
                     ((s2, 0.0), (0.0, s2)))


def ring_world(n_modes=8, radius=3.0, sigma=0.15):
    """Equal-weight modes on a circle, one class per mode; mode 0 on the +x axis."""
    comps = []
    for k in range(n_modes):
        a = 2.0 * np.pi * k / n_modes
        comps.append(isotropic(k, 1.0 / n_modes, (radius * np.cos(a), radius * np.sin(a)), sigma))
    return MixtureModel(comps, name=f"ring{n_modes}")


def grid_world(side=2, spacing=3.0, sigma=0.15):
    """``side x side`` grid centered at the origin, one class per mode."""
    comps = []
    n = side * side
    offs = (np.arange(side) - (side - 1) / 2.0) * spacing
    for k in range(n):
        comps.append(isotropic(k, 1.0 / n, (offs[k % side], offs[k // side]), sigma))
    return MixtureModel(comps, name=f"grid{n}")


def standard_gaussian():
    return MixtureModel([isotropic(0, 1.0, (0.0, 0.0), 1.0)], name="gauss")


NAMED_WORLDS = {
    "ring8": ring_world,
    "grid4": grid_world,
    "gauss": standard_gaussian,
}


@dataclass(frozen=True)
class NoisedState:
    x_t: np.ndarray
    t: float
    eps: np.ndarray = None

    def clean(self):
        """Recover the clean sample from ``x_t`` and the recorded noise."""
        if self.eps is None:
            raise ConfigError("state has no recorded noise")
        return (self.x_t - (1.0 - self.t) * self.eps) / self.t


@dataclass(frozen=True)
class ForbiddenZoneSpec:
    gamma: float
    gamma_strict: float
    q: float

    def __post_init__(self):
        if not self.gamma_strict < self.gamma:
            raise ConfigError(f"need gamma' < gamma, got {self.gamma_strict} >= {self.gamma}")


def check_t(t, clamp=DEFAULT_CLAMP):
    t = float(t)
    if not clamp[0] <= t <= clamp[1]:
        raise RangeError(f"t={t} outside clamp [{clamp[0]}, {clamp[1]}]")
    return t


def sample_mixture(m, n, rng, cls=None):
    """Draw ``n`` points; returns ``(x (n, 2), labels (n,))``."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    idx, logw = m.subset(cls)
    ks = idx[rng.choice(len(idx), size=n, p=np.exp(logw))]
    L = np.linalg.cholesky(m.covs)
    e = rng.standard_normal((n, 2))
    x = m.means[ks] + np.einsum("nij,nj->ni", L[ks], e)
    return x, m.labels[ks]


def forward_diffuse(x, t, eps, clamp=DEFAULT_CLAMP):
    t = check_t(t, clamp)
    x = np.asarray(x, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    return NoisedState(t * x + (1.0 - t) * eps, t, eps)


def _eval(m, x_t, t, cond):
    x = np.asarray(x_t, dtype=np.float64)
    single = x.ndim == 1
    means, P, lognorm, logw, _ = m.noised_params(t, cond)
    logp, score, resp = kernels.mixture_eval(x.reshape(-1, 2), means, P, lognorm, logw)
    return single, logp, score, resp


def noised_log_density(m, x_t, t, cond=None, clamp=DEFAULT_CLAMP):
    t = check_t(t, clamp)
    single, logp, _, _ = _eval(m, x_t, t, cond)
    return float(logp[0]) if single else logp


def noised_score(m, x_t, t, cond=None, clamp=DEFAULT_CLAMP):
    t = check_t(t, clamp)
    single, _, score, _ = _eval(m, x_t, t, cond)
    return score[0] if single else score


def clean_log_density(m, x, cond=None):
    single, logp, _, _ = _eval(m, x, 1.0, cond)
    return float(logp[0]) if single else logp


def clean_score(m, x, cond=None):
    single, _, score, _ = _eval(m, x, 1.0, cond)
    return score[0] if single else score


def tweedie_denoise(x_t, t, score, clamp=DEFAULT_CLAMP):
    """x0_hat = (x_t + (1 - t)^2 * score) / t."""
    t = check_t(t, clamp)
    return (np.asarray(x_t, dtype=np.float64) + (1.0 - t) ** 2 * np.asarray(score)) / t


def posterior_mean(m, x_t, t, cond=None):
    """E[x0 | x_t] from per-component conjugate updates; valid for t in [0, 1]."""
    x = np.asarray(x_t, dtype=np.float64)
    single = x.ndim == 1
    x = x.reshape(-1, 2)
    means, P, lognorm, logw, idx = m.noised_params(float(t), cond)
    _, _, resp = kernels.mixture_eval(x, means, P, lognorm, logw)
    gain = t * np.einsum("kij,kjl->kil", m.covs[idx], P)          # S_k P_k t
    cm = m.means[idx][None] + np.einsum("kij,bkj->bki", gain, x[:, None, :] - means[None])
    out = np.einsum("bk,bki->bi", resp, cm)
    return out[0] if single else out


def energy(m, x):
    """E(x) = -log p(x), capped at the underflow sentinel."""
    lp = clean_log_density(m, x)
    return np.minimum(-lp, ENERGY_SENTINEL) if np.ndim(lp) else min(-lp, ENERGY_SENTINEL)


def in_forbidden_zone(m, x, spec):
    return energy(m, x) > spec.gamma


def calibrate_gamma(m, q, n, rng, q_strict=None):
    """Empirical energy quantiles of ``n`` real samples.

    ``q_strict`` defaults to ``min(0.9, q - 0.2 * (1 - q))`` so that the
    strict threshold always sits below ``gamma``.
    """
    if not 0.5 <= q < 1.0:
        raise ConfigError(f"quantile q={q} outside [0.5, 1)")
    if n < 10_000:
        raise ConfigError(f"calibration needs n >= 1e4 samples, got {n}")
    if q_strict is None:
        q_strict = min(0.9, q - 0.2 * (1.0 - q))
    if not q_strict < q:
        raise ConfigError(f"strict quantile {q_strict} must be below q={q}")
    x, _ = sample_mixture(m, n, rng)
    e = energy(m, x)
    return ForbiddenZoneSpec(float(np.quantile(e, q)), float(np.quantile(e, q_strict)), float(q))


def mode_bounding_box(m, pad_sigmas=3.0):
    lo = m.means.min(axis=0)
    hi = m.means.max(axis=0)
    s = pad_sigmas * np.sqrt(np.max(m.covs[:, [0, 1], [0, 1]]))
    return lo - s, hi + s


def world_from_spec(spec):
    """Build a world from a name or an explicit component list (config sub-document)."""
    if isinstance(spec, MixtureModel):
        return spec
    if isinstance(spec, str):
        spec = {"name": spec}
    name = spec.get("name", "custom")
    if "components" in spec:
        comps = []
        for c in spec["components"]:
            cov = c.get("cov")
            if cov is None:
                s2 = float(c.get("sigma", 1.0)) ** 2
                cov = ((s2, 0.0), (0.0, s2))
            comps.append(Component(int(c["label"]), float(c["weight"]),
                                   tuple(float(v) for v in c["mean"]),
                                   tuple(tuple(float(v) for v in row) for row in cov)))
        return MixtureModel(comps, name=name)
    if name not in NAMED_WORLDS:
        raise ConfigError(f"unknown world {name!r}; known: {sorted(NAMED_WORLDS)}")
    kwargs = {k: v for k, v in spec.items() if k != "name"}
    try:
        return NAMED_WORLDS[name](**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for world {name!r}: {exc}") from None
