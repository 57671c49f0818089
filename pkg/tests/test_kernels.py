"""The compiled kernels must agree with the numpy fallback."""

import numpy as np
import pytest

from amdlab import _pykernels, kernels, worlds

pytestmark = pytest.mark.skipif(not kernels.cython_available(), reason="compiled kernels not built")


@pytest.fixture
def ck():
    from amdlab import _ckernels

    return _ckernels


@pytest.mark.parametrize("act", [kernels.ACT_IDENTITY, kernels.ACT_SILU])
def test_dense_forward_backward_agree(ck, rng, act):
    X = rng.standard_normal((37, 5))
    W = rng.standard_normal((5, 9))
    b = rng.standard_normal(9)
    G = rng.standard_normal((37, 9))
    zp, hp = _pykernels.dense_forward(X, W, b, act)
    zc, hc = ck.dense_forward(X, W, b, act)
    assert np.allclose(zp, zc, rtol=1e-13, atol=1e-13)
    assert np.allclose(hp, hc, rtol=1e-13, atol=1e-13)
    for a, c in zip(_pykernels.dense_backward(X, W, zp, G, act), ck.dense_backward(X, W, zc, G, act)):
        assert np.allclose(a, c, rtol=1e-12, atol=1e-12)


def test_adam_update_agrees(ck, rng):
    args = [rng.standard_normal(40) for _ in range(2)]
    m, v = rng.standard_normal(40), rng.uniform(0, 1, 40)
    p1, p2 = args[0].copy(), args[0].copy()
    m1, m2, v1, v2 = m.copy(), m.copy(), v.copy(), v.copy()
    _pykernels.adam_update(p1, args[1], m1, v1, 1e-3, 0.9, 0.999, 1e-8, 0.19, 0.002)
    ck.adam_update(p2, args[1], m2, v2, 1e-3, 0.9, 0.999, 1e-8, 0.19, 0.002)
    for a, c in ((p1, p2), (m1, m2), (v1, v2)):
        assert np.allclose(a, c, rtol=1e-14, atol=1e-15)


def test_mixture_eval_agrees(ck, rng):
    m = worlds.ring_world()
    X = rng.standard_normal((200, 2)) * 4
    P = np.linalg.inv(m.covs)
    lognorm = -worlds.LOG_2PI - 0.5 * np.log(np.linalg.det(m.covs))
    logw = np.log(m.weights)
    for a, c in zip(_pykernels.mixture_eval(X, m.means, P, lognorm, logw),
                    ck.mixture_eval(X, m.means, P, lognorm, logw)):
        assert np.allclose(a, c, rtol=1e-12, atol=1e-12)


def test_short_training_runs_agree_across_backends():
    from amdlab import engine, operators as ops

    cfg = engine.ExperimentConfig(iterations=30, snapshot_every=30, eval_samples=300,
                                  operator=ops.preset("amd", omega=1.0))
    out = {}
    prev = kernels.BACKEND
    try:
        for name in ("python", "cython"):
            kernels.use_backend(name)
            rec, _ = engine.train(cfg)
            out[name] = np.asarray(rec.snapshots[-1]["samples"])
    finally:
        kernels.use_backend(prev)
    assert np.allclose(out["python"], out["cython"], rtol=1e-8, atol=1e-8)
