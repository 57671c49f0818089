"""The distillation loop: group generation, reward diagnosis, student and
fake-teacher updates, snapshots.

Randomness is split into independent streams (init, train, fake, disc,
eval) spawned from the config seed, so methods that skip a component (no
discriminator, no advantages) still see identical draws everywhere else.
"""

import logging
from dataclasses import dataclass, field, fields

import numpy as np

from . import metrics, reward as rewardlib, teachers, worlds
from . import operators as ops
from .errors import ConfigError, NumericError
from . import kernels
from .ndcore import GradTape, OptimizerState, backward, forward, init_mlp, optimizer_step

log = logging.getLogger(__name__)

SCHEMA_VERSION = "amdlab/1"


@dataclass
class ExperimentConfig:
    world: object = "ring8"
    operator: ops.OperatorConfig = field(default_factory=lambda: ops.preset("amd"))
    reward: rewardlib.RewardLandscape = field(default_factory=rewardlib.RewardLandscape)
    group_size: int = 8
    iterations: int = 3000
    groups_per_iter: int = 4
    null_prompt_prob: float = 0.0
    lr_student: float = 5e-4
    lr_fake: float = 2e-3
    lr_disc: float = 1e-3
    fake_updates: int = 2
    hidden: int = 64
    t_min: float = worlds.T_MIN
    t_max: float = worlds.T_MAX
    seed: int = 0
    snapshot_every: int = 300
    eval_samples: int = 2000
    fz_quantile: float = 0.995
    eps_adv: float = rewardlib.EPS_ADV
    transport_steps: int = 48

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems), problems)
        self._world = worlds.world_from_spec(self.world)
        self.reward.validate(self._world)

    @property
    def omega(self):
        return self.operator.omega

    @property
    def sensitivity(self):
        return self.operator.sensitivity

    @property
    def clamp(self):
        return (self.t_min, self.t_max)

    @property
    def world_model(self):
        return self._world

    def problems(self):
        out = []
        if self.group_size < 2:
            out.append(f"group size K must be >= 2, got {self.group_size}")
        if self.iterations < 0:
            out.append(f"iterations must be >= 0, got {self.iterations}")
        if self.groups_per_iter < 1:
            out.append("groups_per_iter must be >= 1")
        for name in ("lr_student", "lr_fake", "lr_disc"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0 < self.t_min < self.t_max < 1:
            out.append(f"need 0 < t_min < t_max < 1, got [{self.t_min}, {self.t_max}]")
        if not 0.0 <= self.null_prompt_prob <= 1.0:
            out.append("null_prompt_prob must lie in [0, 1]")
        if self.fake_updates < 1:
            out.append("fake_updates must be >= 1")
        if self.snapshot_every < 1:
            out.append("snapshot_every must be >= 1")
        if self.eval_samples < 1:
            out.append("eval_samples must be >= 1")
        if not 0.5 <= self.fz_quantile < 1:
            out.append("fz_quantile must lie in [0.5, 1)")
        if not self.eps_adv > 0:
            out.append("eps_adv must be > 0")
        return out

    def replace(self, **changes):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return ExperimentConfig(**d)


class Student:
    """One-step generator x = G(z, c); input is [z, one-hot(c | null)]."""

    def __init__(self, net, n_classes, conditional=True):
        self.net = net
        self.n_classes = n_classes
        self.conditional = conditional

    @classmethod
    def create(cls, n_classes, rng, hidden=64):
        widths = [2 + n_classes + 1, hidden, hidden, 2]
        return cls(init_mlp(widths, rng, name="student"), n_classes)

    def inputs(self, z, classes):
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        if not self.conditional:
            return z
        return np.concatenate([z, teachers.class_rows(classes, self.n_classes, len(z))], axis=1)

    def __call__(self, z, classes=None, tape=None):
        return forward(self.net, self.inputs(z, classes), tape)


@dataclass
class TrainState:
    iteration: int
    student: Student
    student_opt: OptimizerState
    fake: teachers.FakeTeacher
    real: teachers.RealTeacher
    disc: teachers.Discriminator = None
    rngs: dict = field(default_factory=dict)
    dropped: int = 0
    skipped_steps: int = 0


def make_rngs(seed):
    names = ("init", "train", "fake", "disc", "eval")
    return dict(zip(names, (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(5))))


def init_state(cfg):
    world = cfg.world_model
    rngs = make_rngs(cfg.seed)
    student = Student.create(world.n_classes, rngs["init"], cfg.hidden)
    fake = teachers.FakeTeacher.create(world.n_classes, rngs["init"], cfg.lr_fake, (cfg.hidden,) * 2)
    disc = None
    if cfg.operator.force == "adversarial":
        disc = teachers.Discriminator.create(rngs["init"], cfg.lr_disc, (cfg.hidden,) * 2)
    op = cfg.operator
    real = teachers.RealTeacher(world, op.teacher_lambda0, op.teacher_decay_fraction,
                                op.noise_shift, cfg.clamp)
    return TrainState(0, student, OptimizerState("adam", cfg.lr_student), fake, real, disc, rngs)


def generate_group(student, c, K, rng):
    """K fresh latents for one prompt; returns (z, x)."""
    if K < 2:
        raise ConfigError(f"group size must be >= 2, got {K}")
    z = rng.standard_normal((K, 2))
    return z, student(z, -1 if c is None else c)


def teacher_transport(world, z, cond=None, steps=48):
    """Deterministic teacher map noise -> data via the probability-flow ODE.

    Integrates dx/dt = (E[x0 | x_t] - x_t) / (1 - t) from t=0 (x = z) with
    RK4 on a grid ending just short of t=1, then returns the posterior mean.
    """
    x = np.atleast_2d(np.asarray(z, dtype=np.float64)).copy()
    ts = np.linspace(0.0, 1.0 - 1e-3, steps + 1)

    def vel(xx, t):
        return (worlds.posterior_mean(world, xx, t, cond) - xx) / (1.0 - t)

    for t0, t1 in zip(ts[:-1], ts[1:]):
        h = t1 - t0
        k1 = vel(x, t0)
        k2 = vel(x + 0.5 * h * k1, t0 + 0.5 * h)
        k3 = vel(x + 0.5 * h * k2, t0 + 0.5 * h)
        k4 = vel(x + h * k3, t1)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return worlds.posterior_mean(world, x, ts[-1], cond)


def student_update(state, z, classes, g, tag=None):
    """Backprop the surrogate sum_i 0.5 ||x_i - sg(x_i - g_i)||^2 and step.

    Its parameter gradient is sum_i g_i^T dx_i/dtheta. Rows of ``g`` that are
    non-finite are dropped (zero cotangent); returns the surrogate value.
    """
    g = np.array(g, dtype=np.float64)
    bad = ~np.all(np.isfinite(g), axis=1)
    if bad.any():
        log.warning("iteration %s: dropping %d samples with non-finite g: %s",
                    tag, int(bad.sum()), np.flatnonzero(bad).tolist())
        state.dropped += int(bad.sum())
        g[bad] = 0.0
        if bad.all():
            log.warning("iteration %s: all samples dropped, student step skipped", tag)
            state.skipped_steps += 1
            return 0.0
    tape = GradTape()
    state.student(z, classes, tape)
    grads = backward(tape, g)
    optimizer_step(state.student_opt, state.student.net, grads, tag)
    return 0.5 * float(np.sum(g * g))


def _sample_prompts(cfg, rng, n):
    world = cfg.world_model
    cls = rng.choice(world.n_classes, size=n, p=world.class_prior)
    if cfg.null_prompt_prob > 0.0:
        null = rng.random(n) < cfg.null_prompt_prob
        cls = np.where(null, -1, cls)
    return cls


@dataclass
class StepDiag:
    rewards: list
    advantages: list
    cos_dm_ca: np.ndarray
    cos_real_fake: np.ndarray
    grad_norm: np.ndarray
    saturation: float
    surrogate: float
    fake_loss: float
    disc_loss: float = float("nan")


def train_step(cfg, state, it):
    """One iteration of the loop; mutates ``state`` and returns diagnostics."""
    world = cfg.world_model
    op = cfg.operator
    K, G = cfg.group_size, cfg.groups_per_iter
    rng = state.rngs["train"]
    state.real.schedule(it, cfg.iterations)

    prompts = _sample_prompts(cfg, rng, G)
    z = rng.standard_normal((G * K, 2))
    classes = np.repeat(prompts, K)
    x = state.student(z, classes)

    rewards, advs, sats = [], [], []
    for gi in range(G):
        sl = slice(gi * K, (gi + 1) * K)
        r = rewardlib.eval_reward(cfg.reward, world, x[sl])
        grp = rewardlib.diagnose_group(prompts[gi], x[sl], r, cfg.eps_adv)
        rewards.append(grp.rewards)
        advs.append(grp.advantages)
        sats.append(grp.saturation)
    adv = np.concatenate(advs)
    coeffs = rewardlib.adaptive_coeffs(adv, op.sensitivity) if op.h_form in ("naive", "amd") else None

    t_grp = rng.uniform(cfg.t_min, cfg.t_max, size=G)
    eps = rng.standard_normal((G * K, 2))
    t = np.repeat(t_grp, K)
    x_t = t[:, None] * x + (1.0 - t[:, None]) * eps

    fake_in = worlds.NoisedState(x_t, t, eps)
    d_fake = x - teachers.fake_x0(state.fake, fake_in, classes)[0]
    d_cond = np.empty_like(x)
    d_uncond = np.empty_like(x)
    fake_for_real = state.fake if state.real.adapt > 0.0 else None
    for gi in range(G):
        sl = slice(gi * K, (gi + 1) * K)
        st = worlds.NoisedState(x_t[sl], float(t_grp[gi]), eps[sl])
        c = None if prompts[gi] < 0 else int(prompts[gi])
        d_cond[sl], d_uncond[sl], _ = teachers.cfg_displacements(
            state.real, x[sl], st, c, op.omega, fake_for_real)

    ctx = None
    if op.force != "none" and op.force_weight > 0.0:
        ctx = ops.ForceContext(x=x, landscape=cfg.reward, world=world,
                               discriminator=state.disc,
                               adversarial_table_sign=op.adversarial_table_sign)
        if op.force == "tether":
            x_gt = np.empty_like(x)
            for gi in range(G):
                sl = slice(gi * K, (gi + 1) * K)
                c = None if prompts[gi] < 0 else int(prompts[gi])
                x_gt[sl] = teacher_transport(world, z[sl], c, cfg.transport_steps)
            ctx.x_gt = x_gt
    parts = ops.DisplacementSet(d_cond, d_uncond, d_fake, op.omega)
    comp = ops.compose(op, parts, coeffs, ctx)

    surrogate = student_update(state, z, classes, comp.g, it)

    fake_adv = adv if op.fake_weighting else np.zeros_like(adv)
    fake_loss = float("nan")
    for _ in range(cfg.fake_updates):
        fake_loss = teachers.fake_update(state.fake, x, classes, fake_adv, state.rngs["fake"],
                                         it, cfg.clamp)
    disc_loss = float("nan")
    if state.disc is not None:
        real_x, _ = worlds.sample_mixture(world, G * K, state.rngs["disc"])
        disc_loss = teachers.discriminator_update(state.disc, real_x, x, it)
    state.iteration = it + 1
    return StepDiag(rewards, advs, comp.cos_dm_ca, comp.cos_real_fake, comp.norm,
                    float(np.mean(sats)), surrogate, fake_loss, disc_loss)


@dataclass
class RunRecord:
    header: dict
    snapshots: list = field(default_factory=list)


def _nanmean(vals):
    v = np.concatenate([np.ravel(a) for a in vals]) if vals else np.array([])
    v = v[np.isfinite(v)]
    return float(v.mean()) if v.size else float("nan")


class Evaluator:
    """Fixed evaluation latents/prompts so snapshot clouds are comparable."""

    def __init__(self, cfg, rng):
        self.cfg = cfg
        world = cfg.world_model
        n = cfg.eval_samples
        self.z = rng.standard_normal((n, 2))
        self.classes = _sample_prompts(cfg, rng, n)
        self.spec = worlds.calibrate_gamma(world, cfg.fz_quantile, 20_000, rng)
        self.baseline_nll = metrics.teacher_nll_baseline(world, 20_000, rng)

    def cloud(self, state):
        return state.student(self.z, self.classes)

    def metrics(self, x):
        world = self.cfg.world_model
        occ, un = metrics.mode_occupancy(x, world)
        r = rewardlib.eval_reward(self.cfg.reward, world, x)
        return metrics.MetricsBlock(occ.tolist(), un, metrics.nll_under_teacher(x, world),
                                    metrics.fz_rate(x, world, self.spec), float(np.mean(r)))


def snapshot_iterations(n_iter, every):
    if n_iter <= 0:
        return set()
    return set(range(0, n_iter + 1, every)) | {n_iter}


def train(cfg, sink=None, state=None):
    """Run the full loop; returns ``(RunRecord, TrainState)``.

    ``sink`` (optional) receives each snapshot dict as soon as it is taken.
    """
    state = init_state(cfg) if state is None else state
    ev = Evaluator(cfg, state.rngs["eval"])
    header = {
        "version": SCHEMA_VERSION,
        "backend": kernels.BACKEND,
        "baseline_nll": ev.baseline_nll,
        "gamma": ev.spec.gamma,
        "gamma_strict": ev.spec.gamma_strict,
        "method": cfg.operator.method,
        "seed": cfg.seed,
    }
    record = RunRecord(header)
    marks = snapshot_iterations(cfg.iterations, cfg.snapshot_every)
    window = []

    def take(it, last):
        x = ev.cloud(state)
        mb = ev.metrics(x)
        if window:
            mb.cos_dm_ca = _nanmean([d.cos_dm_ca for d in window])
            mb.cos_real_fake = _nanmean([d.cos_real_fake for d in window])
            mb.grad_norm = _nanmean([d.grad_norm for d in window])
            mb.saturation = float(np.mean([d.saturation for d in window]))
        snap = {
            "version": SCHEMA_VERSION,
            "iteration": it,
            "samples": x.ravel().tolist(),
            "rewards": [r.tolist() for r in last.rewards] if last else [],
            "advantages": [a.tolist() for a in last.advantages] if last else [],
            "metrics": mb.to_dict(),
            "diagnostics": {
                "surrogate": _nanmean([d.surrogate for d in window]) if window else float("nan"),
                "fake_loss": _nanmean([d.fake_loss for d in window]) if window else float("nan"),
                "disc_loss": _nanmean([d.disc_loss for d in window]) if window else float("nan"),
                "dropped": state.dropped,
                "skipped_steps": state.skipped_steps,
                "teacher_adapt": state.real.adapt,
            },
        }
        record.snapshots.append(snap)
        if sink is not None:
            sink(snap)
        window.clear()

    last = None
    if 0 in marks:
        take(0, None)
    for it in range(cfg.iterations):
        try:
            last = train_step(cfg, state, it)
        except NumericError as exc:
            exc.iteration = it if exc.iteration is None else exc.iteration
            raise
        window.append(last)
        if it + 1 in marks:
            take(it + 1, last)
    return record, state
