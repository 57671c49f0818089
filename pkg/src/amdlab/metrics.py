"""Sample-cloud diagnostics: occupancy, NLL under the teacher, Forbidden-Zone rate,
and interference cosines."""

from dataclasses import asdict, dataclass, field

import numpy as np

from . import worlds
from .errors import ConfigError


@dataclass
class MetricsBlock:
    occupancy: list
    unassigned: float
    nll: float
    fz_rate: float
    mean_reward: float = float("nan")
    saturation: float = float("nan")
    cos_dm_ca: float = float("nan")
    cos_real_fake: float = float("nan")
    grad_norm: float = float("nan")
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def default_radius(world):
    return 3.0 * world.scale


def mode_occupancy(samples, world, radius=None):
    """Per-mode fractions of samples within ``radius`` of their nearest mode center."""
    r = default_radius(world) if radius is None else float(radius)
    if not r > 0:
        raise ConfigError(f"assignment radius must be positive, got {r}")
    x = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    d2 = np.sum((x[:, None, :] - world.means[None]) ** 2, axis=2)
    near = np.argmin(d2, axis=1)
    hit = d2[np.arange(len(x)), near] <= r * r
    counts = np.bincount(near[hit], minlength=world.n_components)
    occ = counts / len(x)
    return occ, float((len(x) - counts.sum()) / len(x))


def nll_under_teacher(samples, world):
    x = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    if len(x) == 0:
        raise ConfigError("need at least one sample")
    return float(np.mean(worlds.energy(world, x)))


def fz_rate(samples, world, spec):
    x = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    return float(np.mean(worlds.in_forbidden_zone(world, x, spec)))


def teacher_nll_baseline(world, n, rng):
    x, _ = worlds.sample_mixture(world, n, rng)
    return nll_under_teacher(x, world)


def interference_stats(d_dm, d_ca, d_real=None, d_fake=None):
    """Mean cosines over non-degenerate pairs; zero-norm pairs are skipped and counted."""

    def mean_cos(a, b):
        a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
        b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
        na, nb = np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1)
        ok = (na > 0) & (nb > 0)
        if not ok.any():
            return float("nan"), int((~ok).sum())
        c = np.sum(a[ok] * b[ok], axis=1) / (na[ok] * nb[ok])
        return float(np.mean(c)), int((~ok).sum())

    out = {}
    out["cos_dm_ca"], out["skipped_dm_ca"] = mean_cos(d_dm, d_ca)
    if d_real is not None:
        out["cos_real_fake"], out["skipped_real_fake"] = mean_cos(d_real, d_fake)
    return out
