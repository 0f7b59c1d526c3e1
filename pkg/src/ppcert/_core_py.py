"""Pure numpy implementations of the enumeration kernels.

Signatures and results match the compiled ``ppcert._core`` module.
"""

import numpy as np


def pdp_violation_mass(kernel, pairs, exp_eps, rtol):
    kernel = np.asarray(kernel, dtype=float)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    a = kernel[pairs[:, 0]]
    b = kernel[pairs[:, 1]]
    with np.errstate(invalid="ignore"):
        bad = (a > 0) & (a > exp_eps * b * (1.0 + rtol))
    return np.where(bad, a, 0.0).sum(axis=1)


def two_point_tails(kernel, pairs, ws, kappa, tol):
    kernel = np.asarray(kernel, dtype=float)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    ws = np.asarray(ws, dtype=float)
    a = kernel[pairs[:, 0]][:, None, :]
    b = kernel[pairs[:, 1]][:, None, :]
    w = ws[None, :, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        post = w * a / (w * a + (1.0 - w) * b)
        delta = np.log(post) - np.log(w)
    ok = (a > 0) & (delta <= kappa + tol)
    return np.where(ok, a, 0.0).sum(axis=2)


def two_point_limit_tails(kernel, pairs, kappa, tol):
    kernel = np.asarray(kernel, dtype=float)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    a = kernel[pairs[:, 0]]
    b = kernel[pairs[:, 1]]
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(b > 0, np.log(a) - np.log(np.where(b > 0, b, 1.0)), np.inf)
    ok = (a > 0) & (delta <= kappa + tol)
    return np.where(ok, a, 0.0).sum(axis=1)


def average_gaussian_deltas(mean, cov, x):
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    x = np.asarray(x, dtype=float)
    n = mean.shape[1]
    su = cov.sum(axis=2) / n
    vbar = su.sum(axis=1) / n
    innov = x.mean() - mean.mean(axis=1)
    var = np.diagonal(cov, axis1=1, axis2=2)
    pmean = mean + su * (innov / vbar)[:, None]
    pvar = var - su**2 / vbar[:, None]
    d0 = np.log(var) + (x - mean) ** 2 / var
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = np.log(pvar) + (x - pmean) ** 2 / pvar
    return np.where(pvar > 0, d0 - d1, np.inf)


def _pdp_delta_batch(k, exp_eps, rtol):
    # k: (B, u, c); max over ordered pairs x != y of violating mass
    a = k[:, :, None, :]
    b = k[:, None, :, :]
    bad = (a > 0) & (a > exp_eps * b * (1.0 + rtol))
    mass = np.where(bad, a, 0.0).sum(axis=3)
    u = k.shape[1]
    mass[:, np.arange(u), np.arange(u)] = 0.0
    return mass.reshape(k.shape[0], -1).max(axis=1)


def batch_chain_pdp(ms, ks, exp_eps, rtol):
    ms = np.asarray(ms, dtype=float)
    ks = np.asarray(ks, dtype=float)
    mk = np.zeros((ms.shape[0], ms.shape[1], ks.shape[2]))
    for t in range(ms.shape[2]):
        mk += ms[:, :, t, None] * ks[:, None, t, :]
    return np.stack([_pdp_delta_batch(ms, exp_eps, rtol), _pdp_delta_batch(mk, exp_eps, rtol)], axis=1)
