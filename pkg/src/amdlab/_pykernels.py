"""Pure-numpy implementations of the hot kernels.

Signatures mirror ``_ckernels``; ``amdlab.kernels`` picks one at import.
"""

import numpy as np

ACT_IDENTITY = 0
ACT_SILU = 1


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def dense_forward(X, W, b, act):
    Z = X @ W + b
    if act == ACT_SILU:
        return Z, Z * _sigmoid(Z)
    return Z, Z


def dense_backward(X, W, Z, G, act):
    if act == ACT_SILU:
        s = _sigmoid(Z)
        G = G * (s * (1.0 + Z * (1.0 - s)))
    return G @ W.T, X.T @ G, G.sum(axis=0)


def adam_update(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def mixture_eval(X, means, precs, lognorm, logw):
    diff = X[:, None, :] - means[None, :, :]                 # (B, M, 2)
    pd = np.einsum("kij,bkj->bki", precs, diff)             # (B, M, 2)
    quad = np.einsum("bki,bki->bk", diff, pd)
    logc = logw + lognorm - 0.5 * quad
    top = logc.max(axis=1, keepdims=True)
    ex = np.exp(logc - top)
    tot = ex.sum(axis=1, keepdims=True)
    logp = (top + np.log(tot))[:, 0]
    resp = ex / tot
    score = -np.einsum("bk,bki->bi", resp, pd)
    return logp, score, resp
