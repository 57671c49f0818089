"""Self-test suites behind ``amdlab check``.

Each suite returns a list of ``CheckResult``; the oracles here are
independent of the code under test (finite differences, brute-force grid
quadrature, explicit algebra).
"""

from dataclasses import dataclass

import numpy as np

from . import engine, ndcore, worlds
from . import operators as ops
from . import reward as rewardlib


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.value:.3e} (tol {self.tolerance:.0e}) {self.detail}".rstrip()


def _result(name, value, tol, detail=""):
    return CheckResult(name, bool(value <= tol), float(value), tol, detail)


# ---- decomposition identity

def random_displacements(rng, n, scale=1.0):
    dc, du, df = (scale * rng.standard_normal((n, 2)) for _ in range(3))
    omega = rng.uniform(1.0, 8.0, size=n)
    return dc, du, df, omega


def suite_decomposition(n=100_000, seed=0):
    rng = np.random.default_rng(seed)
    dc, du, df, omega = random_displacements(rng, n)
    w = omega[:, None]
    dm, ca = ops.decompose(ops.Displacement(dc, "cond"), ops.Displacement(du, "uncond"),
                           ops.Displacement(df, "fake"), w)
    h = ops.h_std(ops.cfg_combine(dc, du, w), df)
    err = np.linalg.norm((dm.vec + ca.vec) - h, axis=1).max()
    return [_result("decomposition identity (d_dm + d_ca == d_real - d_fake)", err, 1e-12, f"n={n}")]


# ---- reduction lattice

def suite_reduction(n=10_000, seed=1, train_iterations=60):
    rng = np.random.default_rng(seed)
    dc, du, df, omega = random_displacements(rng, n, scale=3.0)
    zero = rewardlib.adaptive_coeffs(np.zeros(n), 0.5)
    out = []
    worst_amd = worst_naive = 0
    for k in range(0, n, 1000):
        sl = slice(k, k + 1000)
        w = float(omega[k])
        parts = ops.DisplacementSet(dc[sl], du[sl], df[sl], w)
        std = ops.compose(ops.preset("dmd", force_weight=0.0), parts).g
        coeffs = rewardlib.AdaptiveCoeffs(zero.alpha[sl], zero.beta[sl], 0.5)
        amd = ops.compose(ops.preset("amd"), parts, coeffs).g
        naive = ops.compose(ops.preset("naive"), parts, coeffs).g
        worst_amd += int(np.count_nonzero(amd != std))
        worst_naive += int(np.count_nonzero(naive != std))
    out.append(_result("h_amd(a=0) == h_std bitwise", worst_amd, 0, f"mismatched entries over n={n}"))
    out.append(_result("h_naive(a=0) == h_std bitwise", worst_naive, 0, f"mismatched entries over n={n}"))
    if train_iterations:
        flat = rewardlib.RewardLandscape("constant", value=0.0)
        cfg = engine.ExperimentConfig(iterations=train_iterations, snapshot_every=max(1, train_iterations // 3),
                                      reward=flat, operator=ops.preset("amd"), eval_samples=500)
        ra, _ = engine.train(cfg)
        rb, _ = engine.train(cfg.replace(operator=ops.preset("dmd", force_weight=0.0)))
        diff = sum(int(np.count_nonzero(np.asarray(a["samples"]) != np.asarray(b["samples"])))
                   for a, b in zip(ra.snapshots, rb.snapshots))
        out.append(_result("AMD under constant reward reproduces DMD trajectory", diff, 0,
                           f"{len(ra.snapshots)} snapshots, {train_iterations} iterations"))
    return out


# ---- analytic scores

def _prior_density(world, x0):
    """Mixture density evaluated straight from the component parameters."""
    p = np.zeros(x0.shape[:-1])
    for w, mu, cov in zip(world.weights, world.means, world.covs):
        P = np.linalg.inv(cov)
        d = x0 - mu
        q = np.einsum("...i,ij,...j->...", d, P, d)
        p += w * np.exp(-0.5 * q) / (2.0 * np.pi * np.sqrt(np.linalg.det(cov)))
    return p


def grid_posterior(world, x_t, t, n=401):
    """(p_t(x_t), E[x0 | x_t]) by brute-force quadrature over x0.

    The grid covers the prior support intersected with a window around the
    likelihood peak, so narrow posteriors at t near 1 are still resolved.
    """
    sig = (1.0 - t) / t
    lo, hi = worlds.mode_bounding_box(world, 9.0)
    c = x_t / t
    a, b = np.maximum(lo, c - 12.0 * sig), np.minimum(hi, c + 12.0 * sig)
    if np.any(a >= b):
        a, b = lo, hi
    u = np.linspace(a[0], b[0], n)
    v = np.linspace(a[1], b[1], n)
    X0 = np.stack(np.meshgrid(u, v, indexing="ij"), axis=-1)
    s2 = (1.0 - t) ** 2
    lik = np.exp(-np.sum((x_t - t * X0) ** 2, axis=-1) / (2.0 * s2)) / (2.0 * np.pi * s2)
    f = _prior_density(world, X0) * lik
    da = (u[1] - u[0]) * (v[1] - v[0])
    Z = f.sum() * da
    mean = np.einsum("ij,ijk->k", f, X0) * da / Z
    return Z, mean


def probe_states(world, n, rng, clamp=worlds.DEFAULT_CLAMP):
    x0, _ = worlds.sample_mixture(world, n, rng)
    t = rng.uniform(clamp[0], clamp[1], size=n)
    eps = rng.standard_normal((n, 2))
    return t[:, None] * x0 + (1.0 - t[:, None]) * eps, t


def suite_scores(world=None, n_fd=1000, n_grid=100, seed=2):
    world = worlds.ring_world() if world is None else world
    rng = np.random.default_rng(seed)
    x, t = probe_states(world, n_fd, rng)
    h = 1e-5
    worst = 0.0
    for xi, ti in zip(x, t):
        s = worlds.noised_score(world, xi, ti)
        fd = np.array([
            (worlds.noised_log_density(world, xi + h * e, ti) - worlds.noised_log_density(world, xi - h * e, ti))
            / (2.0 * h) for e in np.eye(2)])
        worst = max(worst, np.linalg.norm(fd - s) / max(np.linalg.norm(fd), 1.0))
    out = [_result("noised_score vs finite differences", worst, 1e-5, f"{n_fd} probes")]
    x, t = probe_states(world, n_grid, rng)
    worst_mean = worst_dens = 0.0
    for xi, ti in zip(x, t):
        Z, mean = grid_posterior(world, xi, ti)
        s = worlds.noised_score(world, xi, ti)
        x0 = worlds.tweedie_denoise(xi, ti, s)
        worst_mean = max(worst_mean, np.linalg.norm(x0 - mean) / max(np.linalg.norm(mean), 1.0))
        worst_dens = max(worst_dens, abs(np.exp(worlds.noised_log_density(world, xi, ti)) / Z - 1.0))
    out.append(_result("tweedie_denoise vs grid posterior mean", worst_mean, 1e-3, f"{n_grid} probes"))
    out.append(_result("noised_log_density vs numerical convolution", worst_dens, 1e-3, f"{n_grid} probes"))
    return out


# ---- autodiff

def surrogate_loss(target):
    """0.5 sum ||x - target||^2 with ``target = sg(x - g)``; its cotangent is g."""

    def loss(x):
        r = x - target
        return 0.5 * float(np.sum(r * r)), r

    return loss


def direct_param_step(x, g, lr):
    """One SGD step on a generator whose outputs are its own parameters.

    The net is a single linear layer fed one-hot rows, so row i of W is x_i.
    """
    n = len(x)
    net = ndcore.Mlp([n, 2], [np.array(x, dtype=np.float64)], [np.zeros(2)], activation="identity")
    eye = np.eye(n)
    out = ndcore.forward(net, eye)
    _, grads = ndcore.value_and_grad(net, eye, surrogate_loss(out - g))
    ndcore.optimizer_step(ndcore.OptimizerState("sgd", lr), net, {"W0": grads["W0"], "b0": np.zeros(2)})
    return ndcore.forward(net, eye)


def suite_autodiff(seed=3, nets=8):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(nets):
        depth = int(rng.integers(1, 4))
        widths = [int(rng.integers(1, 6)) for _ in range(depth + 1)]
        act = "silu" if k % 2 == 0 else "identity"
        net = ndcore.init_mlp(widths, rng, activation=act)
        x = rng.standard_normal((5, widths[0]))
        target = rng.standard_normal((5, widths[-1]))
        worst = max(worst, ndcore.grad_check(net, x, ndcore.mse_loss(target), 64, 1e-5, rng))
    out = [_result("grad_check on randomized nets", worst, 1e-4, f"{nets} nets")]
    student = engine.Student.create(8, rng)
    z = rng.standard_normal((16, 2))
    cls = rng.integers(0, 8, size=16)
    inp = student.inputs(z, cls)
    x = student(z, cls)
    g = rng.standard_normal(x.shape)
    err = ndcore.grad_check(student.net, inp, surrogate_loss(x - g), 64, 1e-5, rng)
    out.append(_result("grad_check on student surrogate loss", err, 1e-4))
    x0 = rng.standard_normal((32, 2))
    g = rng.standard_normal((32, 2))
    lr = 0.37
    moved = direct_param_step(x0, g, lr)
    out.append(_result("direct parameterization: x_new == x - lr g", np.abs(moved - (x0 - lr * g)).max(), 1e-10))
    return out


# ---- advantage machinery

def suite_advantages(groups=100_000, K=8, seed=4):
    rng = np.random.default_rng(seed)
    scale = np.exp(rng.uniform(-3.0, 3.0, size=(groups, 1)))
    r = rng.standard_normal((groups, K)) * scale + rng.uniform(-10.0, 10.0, size=(groups, 1))
    a = rng.uniform(0.1, 10.0)
    b = rng.uniform(-5.0, 5.0)
    raw = rewardlib.standardize(r)[0]
    adv = rewardlib.group_advantage(r)
    aff = rewardlib.group_advantage(a * r + b)
    # per-group explicit formula with a population std, on a sample of groups
    worst = 0.0
    for i in rng.choice(groups, size=min(groups, 2000), replace=False):
        mu = sum(r[i]) / K
        sd = np.sqrt(sum((v - mu) ** 2 for v in r[i]) / K)
        ref = [min(1.0, max(-1.0, (v - mu) / (sd + rewardlib.EPS_ADV))) for v in r[i]]
        worst = max(worst, np.abs(adv[i] - ref).max())
    out = [_result("group_advantage matches explicit formula", worst, 1e-12, "2000 sampled groups")]
    out.append(_result("advantages within [-1, 1]", max(0.0, np.abs(adv).max() - 1.0), 0.0))
    out.append(_result("pre-clip advantages have zero mean", np.abs(raw.mean(axis=1)).max(), 1e-12))
    # eps_adv perturbs each advantage by at most sqrt(K - 1) eps / sigma; anything beyond
    # that bound (plus rounding) would be a real invariance failure
    sd = r.std(axis=1)
    bound = np.sqrt(K - 1) * rewardlib.EPS_ADV / np.minimum(sd, a * sd)
    excess = np.max(np.abs(aff - adv).max(axis=1) - bound[:]) if groups else 0.0
    out.append(_result("affine invariance a R + b (beyond the eps_adv bound)", max(excess, 0.0), 1e-12,
                       f"a={a:.3f}, b={b:.3f}"))
    c = rewardlib.adaptive_coeffs(adv, 0.5)
    out.append(_result("alpha + beta == 2", np.abs(c.alpha + c.beta - 2.0).max(), 0.0))
    w = rewardlib.sharpening_weight(adv) * rewardlib.sharpening_weight(-adv)
    out.append(_result("W(a) W(-a) == 1", np.abs(w - 1.0).max(), 4.0 * np.finfo(float).eps))
    hand = rewardlib.group_advantage([1.0, 3.0, 5.0])
    out.append(_result("hand case [1, 3, 5] -> (-1, 0, 1)", np.abs(hand - [-1.0, 0.0, 1.0]).max(), 0.0))
    return out


SUITES = {
    "decomposition": suite_decomposition,
    "reduction": suite_reduction,
    "scores": suite_scores,
    "autodiff": suite_autodiff,
    "advantages": suite_advantages,
}


def run_all(names=None, emit=print):
    results = []
    for name in names or SUITES:
        for res in SUITES[name]():
            emit(res.line())
            results.append(res)
    return results
