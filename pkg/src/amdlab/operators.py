"""Displacement-gradient operators and the method taxonomy.

Every operator returns a descent direction ``g`` consumed as
``x <- x - eta * g``. All functions are batched over a leading axis.

The adaptive operators are written as the neutral operator plus
coefficient-deviation terms, e.g.
``h_amd = h_std + (beta - 1) d_dm + (alpha - 1) d_ca``; this equals
``beta d_dm + alpha d_ca`` algebraically and reproduces ``h_std`` bit for
bit when ``alpha == beta == 1``.
"""

from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import reward as rewardlib
from . import teachers
from .errors import ConfigError, UsageError

METHODS = ("dmd", "dmd2", "ddmd", "magic", "dmdr", "naive", "amd")
FORCES = ("none", "tether", "adversarial", "reward")
H_FORMS = {
    "dmd": "std", "dmd2": "std", "magic": "std", "dmdr": "std",
    "ddmd": "decomposed", "naive": "naive", "amd": "amd",
}
ROLES = ("real", "cond", "uncond", "fake", "dm", "ca")


@dataclass(frozen=True)
class Displacement:
    vec: np.ndarray
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise UsageError(f"unknown displacement role {self.role!r}")


def _expect(d, *roles):
    if not isinstance(d, Displacement):
        return np.asarray(d, dtype=np.float64)
    if d.role not in roles:
        raise UsageError(f"expected displacement role in {roles}, got {d.role!r}")
    return d.vec


def _col(c, ref):
    c = np.asarray(c, dtype=np.float64)
    return c[..., None] if c.ndim and c.ndim == ref.ndim - 1 else c


def cfg_combine(d_cond, d_uncond, omega):
    dc, du = _expect(d_cond, "cond"), _expect(d_uncond, "uncond")
    return Displacement(du + omega * (dc - du), "real")


def h_std(d_real, d_fake):
    """d_real - d_fake."""
    return _expect(d_real, "real") - _expect(d_fake, "fake")


def decompose(d_cond, d_uncond, d_fake, omega):
    """(d_dm, d_ca) = (d_cond - d_fake, (omega - 1)(d_cond - d_uncond))."""
    if np.any(np.asarray(omega) < 1.0):
        raise ConfigError(f"omega must be >= 1, got {np.min(omega)}")
    dc = _expect(d_cond, "cond")
    du = _expect(d_uncond, "uncond")
    df = _expect(d_fake, "fake")
    return Displacement(dc - df, "dm"), Displacement((omega - 1.0) * (dc - du), "ca")


def h_naive(d_real, d_fake, coeffs):
    """alpha d_real - beta d_fake."""
    dr, df = _expect(d_real, "real"), _expect(d_fake, "fake")
    a, b = _col(coeffs.alpha, dr), _col(coeffs.beta, dr)
    return (dr - df) + ((a - 1.0) * dr - (b - 1.0) * df)


def h_amd(d_cond, d_uncond, d_fake, omega, coeffs):
    """beta d_dm + alpha d_ca."""
    dm, ca = decompose(d_cond, d_uncond, d_fake, omega)
    dr = cfg_combine(d_cond, d_uncond, omega)
    a, b = _col(coeffs.alpha, dm.vec), _col(coeffs.beta, dm.vec)
    return h_std(dr, d_fake) + ((b - 1.0) * dm.vec + (a - 1.0) * ca.vec)


def h_decomposed(d_cond, d_uncond, d_fake, omega):
    dm, ca = decompose(d_cond, d_uncond, d_fake, omega)
    return dm.vec + ca.vec


@dataclass
class ForceContext:
    x: np.ndarray
    x_gt: np.ndarray = None
    discriminator: object = None
    landscape: object = None
    world: object = None
    adversarial_table_sign: bool = False


def external_force(kind, ctx):
    """Descent-form auxiliary force at ``ctx.x``."""
    x = np.asarray(ctx.x, dtype=np.float64)
    if kind == "none":
        return np.zeros_like(x)
    if kind == "tether":
        if ctx.x_gt is None:
            raise ConfigError("tether force needs paired ground truth x_gt")
        return x - ctx.x_gt
    if kind == "adversarial":
        if ctx.discriminator is None:
            raise ConfigError("adversarial force needs a discriminator")
        return teachers.adversarial_force(ctx.discriminator, x, ctx.adversarial_table_sign)
    if kind == "reward":
        if ctx.landscape is None or ctx.world is None:
            raise ConfigError("reward force needs a reward landscape and its world")
        return -rewardlib.reward_grad(ctx.landscape, ctx.world, x)
    raise ConfigError(f"unknown external force {kind!r}; valid: {', '.join(FORCES)}")


@dataclass
class OperatorConfig:
    method: str = "amd"
    omega: float = 3.0
    sensitivity: float = 0.5
    force: str = "none"
    force_weight: float = 0.0
    noise_shift: float = 0.0
    teacher_lambda0: float = 0.0
    teacher_decay_fraction: float = 0.4
    fake_weighting: bool = False
    adversarial_table_sign: bool = False

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems), problems)

    def problems(self):
        out = []
        if self.method not in METHODS:
            out.append(f"unknown method {self.method!r}; valid: {', '.join(METHODS)}")
        if self.force not in FORCES:
            out.append(f"unknown force {self.force!r}; valid: {', '.join(FORCES)}")
        if not self.omega >= 1.0:
            out.append(f"omega must be >= 1, got {self.omega}")
        if not self.sensitivity > 0:
            out.append(f"sensitivity s must be > 0, got {self.sensitivity}")
        if not self.force_weight >= 0:
            out.append(f"force weight must be >= 0, got {self.force_weight}")
        if not -0.5 <= self.noise_shift <= 0.5:
            out.append(f"noise shift must lie in [-0.5, 0.5], got {self.noise_shift}")
        if not 0.0 <= self.teacher_lambda0 <= 1.0:
            out.append(f"teacher lambda0 must lie in [0, 1], got {self.teacher_lambda0}")
        return out

    @property
    def h_form(self):
        return H_FORMS[self.method]

    @property
    def uses_advantage(self):
        return self.h_form in ("naive", "amd") or self.fake_weighting

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown operator keys: {sorted(extra)}")
        return cls(**d)


_PRESETS = {
    "dmd": dict(force="tether", force_weight=0.25),
    "dmd2": dict(force="adversarial", force_weight=0.25),
    "ddmd": dict(noise_shift=-0.2),
    "magic": dict(teacher_lambda0=0.5),
    "dmdr": dict(force="reward", force_weight=0.5),
    "naive": dict(),
    "amd": dict(fake_weighting=True),
}


def preset(method, **overrides):
    if method not in _PRESETS:
        raise ConfigError(f"unknown method {method!r}; valid: {', '.join(METHODS)}")
    return replace(OperatorConfig(method=method, **_PRESETS[method]), **overrides)


def _cos(a, b):
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    ok = (na > 0) & (nb > 0)
    c = np.full(na.shape, np.nan)
    c[ok] = np.sum(a[ok] * b[ok], axis=-1) / (na[ok] * nb[ok])
    return c


@dataclass
class DisplacementSet:
    cond: np.ndarray
    uncond: np.ndarray
    fake: np.ndarray
    omega: float

    @property
    def real(self):
        return self.uncond + self.omega * (self.cond - self.uncond)


@dataclass
class CompositeGradient:
    g: np.ndarray
    h_part: np.ndarray
    f_part: np.ndarray
    cos_dm_ca: np.ndarray = field(default=None)
    cos_real_fake: np.ndarray = field(default=None)
    d_dm: np.ndarray = field(default=None)
    d_ca: np.ndarray = field(default=None)

    @property
    def norm(self):
        return np.linalg.norm(self.g, axis=-1)


def compose(cfg, parts, coeffs=None, ctx=None):
    """g = H(d_real, d_fake) + lambda * F_ext with diagnostics."""
    dc = Displacement(np.asarray(parts.cond, dtype=np.float64), "cond")
    du = Displacement(np.asarray(parts.uncond, dtype=np.float64), "uncond")
    df = Displacement(np.asarray(parts.fake, dtype=np.float64), "fake")
    omega = parts.omega
    dr = cfg_combine(dc, du, omega)
    form = cfg.h_form
    if form in ("naive", "amd") and coeffs is None:
        raise ConfigError(f"method {cfg.method!r} needs adaptive coefficients")
    if form == "std":
        h = h_std(dr, df)
    elif form == "decomposed":
        h = h_decomposed(dc, du, df, omega)
    elif form == "naive":
        h = h_naive(dr, df, coeffs)
    else:
        h = h_amd(dc, du, df, omega, coeffs)
    if cfg.force == "none" or cfg.force_weight == 0.0:
        f = np.zeros_like(h)
        g = h
    else:
        if ctx is None:
            raise ConfigError(f"force {cfg.force!r} needs a force context")
        f = cfg.force_weight * external_force(cfg.force, ctx)
        g = h + f
    dm, ca = decompose(dc, du, df, omega)
    # cosine against the unscaled CA direction: same value for omega > 1, still defined at omega == 1
    return CompositeGradient(g, h, f, _cos(dm.vec, dc.vec - du.vec), _cos(dr.vec, df.vec),
                             dm.vec, ca.vec)
