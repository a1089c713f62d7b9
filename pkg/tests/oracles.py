"""Independent reference implementations used as test oracles.

Written with plain loops and the math module, sharing no code with the
package, so agreement is evidence rather than tautology.
"""
import math

import numpy as np


def log_sigmoid(t):
    # log(1 / (1 + exp(-t))), stable for either sign
    if t >= 0:
        return -math.log1p(math.exp(-t))
    return t - math.log1p(math.exp(t))


def bernoulli_logit(y, eta):
    return log_sigmoid(eta) if y else log_sigmoid(-eta)


def dist(a, b):
    return math.sqrt(sum((float(u) - float(v)) ** 2 for u, v in zip(a, b)))


def item_positions(z, x):
    n, p = len(x), len(x[0])
    dim = len(z[0])
    w = []
    for i in range(p):
        members = [k for k in range(n) if x[k][i] == 1]
        w.append([sum(z[k][d] for k in members) / len(members) for d in range(dim)])
    return w


def joint_loglik(beta, theta, z, x, ordered=False):
    """Enumerate every layer and every pair (unordered unless ``ordered``)."""
    n, p = len(x), len(x[0])
    w = item_positions(z, x)
    total = 0.0
    for i in range(p):
        for k in range(n):
            for l in range(n):
                if l == k or (not ordered and l < k):
                    continue
                y = x[k][i] * x[l][i]
                total += bernoulli_logit(y, beta[i] - dist(z[k], z[l]))
    for k in range(n):
        for i in range(p):
            for j in range(p):
                if j == i or (not ordered and j < i):
                    continue
                u = x[k][i] * x[k][j]
                total += bernoulli_logit(u, theta[k] - dist(w[i], w[j]))
    return total


def normal_logpdf(v, var):
    return -0.5 * (math.log(2 * math.pi * var) + v * v / var)


def invgamma_logpdf(s, a, b):
    return a * math.log(b) - math.lgamma(a) - (a + 1) * math.log(s) - b / s


def log_posterior(beta, theta, sigma_z_sq, z, x, sb=100.0, st=100.0, a=0.01, b=0.01, ordered=False):
    lp = joint_loglik(beta, theta, z, x, ordered)
    lp += sum(normal_logpdf(v, sb) for v in beta)
    lp += sum(normal_logpdf(v, st) for v in theta)
    lp += sum(normal_logpdf(v, sigma_z_sq) for row in z for v in row)
    lp += invgamma_logpdf(sigma_z_sq, a, b)
    return lp


def procrustes(sample, reference):
    """Orthogonal Procrustes via the polar decomposition of the cross-covariance."""
    a = np.asarray(sample, float) - np.mean(sample, axis=0)
    b = np.asarray(reference, float) - np.mean(reference, axis=0)
    m = a.T @ b
    # polar factor from the eigen-decomposition of m^T m
    vals, vecs = np.linalg.eigh(m.T @ m)
    inv_sqrt = vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T
    r = m @ inv_sqrt
    return a @ r + np.mean(reference, axis=0)


def random_instance(rng, n, p, dim=2, scale=1.0):
    """Random fittable response matrix (every item has a correct answer) and parameters."""
    while True:
        x = (rng.random((n, p)) < 0.6).astype(int)
        if x.sum(axis=0).min() > 0:
            break
    beta = rng.normal(0, 1.5, p)
    theta = rng.normal(0, 1.5, n)
    z = rng.normal(0, scale, (n, dim))
    return x, beta, theta, z
