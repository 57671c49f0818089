import math

import numpy as np
import pytest

from amdlab import metrics, worlds
from amdlab.errors import ConfigError

RING = worlds.ring_world()


@pytest.fixture(scope="module")
def teacher_cloud():
    return worlds.sample_mixture(RING, 10_000, np.random.default_rng(21))


def test_occupancy_at_centers():
    labels = np.array([0, 0, 1, 3, 3, 3, 7, 7])
    occ, un = metrics.mode_occupancy(RING.means[labels], RING)
    assert np.array_equal(occ, np.bincount(labels, minlength=8) / 8) and un == 0.0


def test_occupancy_far_away():
    occ, un = metrics.mode_occupancy(np.full((5, 2), 50.0), RING)
    assert un == 1.0 and np.all(occ == 0.0)


def test_occupancy_teacher_samples(teacher_cloud):
    x, labels = teacher_cloud
    occ, un = metrics.mode_occupancy(x, RING)
    # P(|z| > 3) for a 2D standard normal is exp(-4.5) ~ 0.011
    assert un <= 0.02
    assert math.fsum([*occ, un]) == pytest.approx(1.0, abs=1e-15)
    sd = np.sqrt(0.125 * 0.875 / len(x))
    assert np.all(np.abs(occ + un / 8 - 0.125) <= 3 * sd + un)


def test_occupancy_radius_validated():
    with pytest.raises(ConfigError):
        metrics.mode_occupancy(np.zeros((1, 2)), RING, radius=0.0)


def test_nll_matches_monte_carlo_entropy(teacher_cloud):
    x, _ = teacher_cloud
    big, _ = worlds.sample_mixture(RING, 1_000_000, np.random.default_rng(5))
    ref = float(np.mean(worlds.energy(RING, big)))
    assert abs(metrics.nll_under_teacher(x, RING) - ref) <= 0.05


def test_nll_point_mass():
    assert metrics.nll_under_teacher(np.tile(RING.means[4], (3, 1)), RING) == pytest.approx(
        worlds.energy(RING, RING.means[4]), rel=1e-15)


def test_nll_increases_along_outward_ray(teacher_cloud):
    x, _ = teacher_cloud
    vals = [metrics.nll_under_teacher(x * (1 + k), RING) for k in np.linspace(0.5, 3, 6)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert metrics.nll_under_teacher(x + 100.0, RING) == worlds.ENERGY_SENTINEL


def test_nll_empty_rejected():
    with pytest.raises(ConfigError):
        metrics.nll_under_teacher(np.zeros((0, 2)), RING)


def test_fz_rate(teacher_cloud):
    x, _ = teacher_cloud
    spec = worlds.calibrate_gamma(RING, 0.995, 100_000, np.random.default_rng(8))
    assert abs(metrics.fz_rate(x, RING, spec) - 0.005) <= 0.003
    assert metrics.fz_rate(np.full((4, 2), 30.0), RING, spec) == 1.0
    rates = [metrics.fz_rate(x, RING, worlds.ForbiddenZoneSpec(g, g - 1, 0.99)) for g in np.linspace(-1, 8, 10)]
    assert all(b <= a for a, b in zip(rates, rates[1:]))


def test_metrics_permutation_invariant(teacher_cloud, rng):
    x, _ = teacher_cloud
    y = x[rng.permutation(len(x))]
    spec = worlds.ForbiddenZoneSpec(3.0, 2.0, 0.99)
    assert metrics.nll_under_teacher(x, RING) == pytest.approx(metrics.nll_under_teacher(y, RING), rel=1e-13)
    assert metrics.fz_rate(x, RING, spec) == metrics.fz_rate(y, RING, spec)


def test_interference_examples(rng):
    a = rng.standard_normal((50, 2))
    assert metrics.interference_stats(a, 3 * a)["cos_dm_ca"] == pytest.approx(1.0, abs=1e-14)
    assert metrics.interference_stats(a, -a)["cos_dm_ca"] == pytest.approx(-1.0, abs=1e-14)
    out = metrics.interference_stats(rng.standard_normal((10_000, 2)), rng.standard_normal((10_000, 2)),
                                     a, a)
    assert abs(out["cos_dm_ca"]) <= 0.03
    assert out["cos_real_fake"] == pytest.approx(1.0)


def test_interference_skips_zero_pairs(rng):
    a = rng.standard_normal((4, 2))
    b = a.copy()
    b[1] = 0.0
    out = metrics.interference_stats(a, b)
    assert out["skipped_dm_ca"] == 1 and out["cos_dm_ca"] == pytest.approx(1.0)
    assert np.isnan(metrics.interference_stats(np.zeros((3, 2)), a[:3])["cos_dm_ca"])


def test_metrics_block_roundtrip():
    blk = metrics.MetricsBlock([0.5, 0.5], 0.0, 1.2, 0.01)
    d = blk.to_dict()
    assert d["nll"] == 1.2 and metrics.MetricsBlock(**d) == blk
