"""Finite-mixture Rasch model fitted by marginal maximum likelihood (EM).

Within class ``g`` the probability of a correct response is
``expit(theta + beta[g, i])`` with ``theta ~ N(mu[g], sigma[g]^2)``; abilities are
integrated out with Gauss-Hermite quadrature. Item easiness sums to zero
within each class and the class means are free.

The M-step works in the equivalent parametrisation ``a[g, i] = mu[g] + beta[g, i]``
and ``sigma[g]``, in which the expected complete-data log-likelihood of each
class is concave, and takes damped Newton steps that never lower it. That makes
the procedure a generalized EM, so the observed-data log-likelihood cannot
decrease; every iteration asserts as much.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit, logsumexp

from .clustering import ClusterAssignment
from .data import ItemResponseMatrix

__all__ = [
    "EMConfig",
    "MixtureRaschModel",
    "MixtureFit",
    "MonotonicityError",
    "em_fit",
    "log_likelihood",
    "class_posteriors",
    "classify_map",
    "pattern_probabilities",
]

logger = logging.getLogger(__name__)


class MonotonicityError(AssertionError):
    """The observed-data log-likelihood decreased between EM iterations."""


@dataclass(frozen=True)
class EMConfig:
    n_nodes: int = 21
    max_iter: int = 2000
    rel_tol: float = 1e-6
    n_starts: int = 10
    newton_steps: int = 1
    # machine tolerance for the monotonicity check, relative to |loglik|
    monotone_tol: float = 1e-10
    n_workers: int = 1
    max_restarts: int = 20


@dataclass
class MixtureRaschModel:
    weights: np.ndarray  # (G,)
    beta: np.ndarray  # (G, p) item easiness, rows sum to zero
    mu: np.ndarray  # (G,)
    sigma: np.ndarray  # (G,)
    n_nodes: int = 21

    @property
    def n_classes(self) -> int:
        return self.weights.size

    @property
    def intercepts(self) -> np.ndarray:
        return self.mu[:, None] + self.beta

    def permuted(self, order) -> "MixtureRaschModel":
        order = np.asarray(order)
        return MixtureRaschModel(self.weights[order], self.beta[order], self.mu[order], self.sigma[order], self.n_nodes)

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "n_nodes": self.n_nodes,
            "weights": self.weights.tolist(),
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
            "beta": self.beta.tolist(),
        }


@dataclass
class MixtureFit:
    model: MixtureRaschModel
    loglik: float
    trace: list[float]
    converged: bool
    start: int
    restarts: int = 0
    all_logliks: list[float] = field(default_factory=list)


def _quadrature(n_nodes: int):
    t, w = np.polynomial.hermite_e.hermegauss(n_nodes)
    return t, np.log(w / np.sqrt(2.0 * np.pi))


def _joint_log(x: np.ndarray, intercepts: np.ndarray, sigma: np.ndarray, log_weights: np.ndarray,
               nodes: np.ndarray, log_node_w: np.ndarray) -> np.ndarray:
    """``log P(x_k, g, node q)`` with shape ``(n, G, Q)``."""
    eta = intercepts[:, None, :] + sigma[:, None, None] * nodes[None, :, None]  # (G, Q, p)
    log_p1 = -np.logaddexp(0.0, -eta)
    log_p0 = -np.logaddexp(0.0, eta)
    ll = np.einsum("ki,gqi->kgq", x, log_p1 - log_p0) + log_p0.sum(axis=2)[None]
    return ll + log_weights[None, :, None] + log_node_w[None, None, :]


def log_likelihood(model: MixtureRaschModel, x: ItemResponseMatrix) -> float:
    nodes, lw = _quadrature(model.n_nodes)
    j = _joint_log(x.x.astype(float), model.intercepts, model.sigma, np.log(model.weights), nodes, lw)
    return float(logsumexp(j, axis=(1, 2)).sum())


def class_posteriors(model: MixtureRaschModel, x: ItemResponseMatrix) -> np.ndarray:
    nodes, lw = _quadrature(model.n_nodes)
    j = _joint_log(x.x.astype(float), model.intercepts, model.sigma, np.log(model.weights), nodes, lw)
    per_class = logsumexp(j, axis=2)
    return np.exp(per_class - logsumexp(per_class, axis=1, keepdims=True))


def classify_map(model: MixtureRaschModel, x: ItemResponseMatrix) -> ClusterAssignment:
    post = class_posteriors(model, x)
    return ClusterAssignment(np.argmax(post, axis=1), model.n_classes)


def pattern_probabilities(model: MixtureRaschModel, p: Optional[int] = None) -> np.ndarray:
    """Marginal probability of every response pattern (row ``r`` is ``r`` in binary, item 0 first)."""
    p = model.beta.shape[1] if p is None else p
    if p > 20:
        raise ValueError("pattern enumeration is limited to p <= 20")
    codes = np.arange(2 ** p)
    patterns = ((codes[:, None] >> np.arange(p)[None, :]) & 1).astype(float)
    nodes, lw = _quadrature(model.n_nodes)
    j = _joint_log(patterns, model.intercepts, model.sigma, np.log(model.weights), nodes, lw)
    return np.exp(logsumexp(j, axis=(1, 2)))


def _class_q(a, sigma, r0, r1, nodes):
    eta = a[None, :] + sigma * nodes[:, None]  # (Q, p)
    return float(np.sum(r1 * eta) - np.sum(r0[:, None] * np.logaddexp(0.0, eta)))


def _m_step_class(a, sigma, r0, r1, nodes, steps):
    """Damped Newton ascent on one class's expected complete-data log-likelihood."""
    p = a.size
    q_old = _class_q(a, sigma, r0, r1, nodes)
    for _ in range(steps):
        eta = a[None, :] + sigma * nodes[:, None]
        prob = expit(eta)
        resid = r1 - r0[:, None] * prob  # (Q, p)
        wgt = r0[:, None] * prob * (1.0 - prob)
        grad = np.concatenate([resid.sum(axis=0), [np.sum(resid * nodes[:, None])]])
        hess = np.zeros((p + 1, p + 1))
        hess[np.arange(p), np.arange(p)] = wgt.sum(axis=0)
        cross = (wgt * nodes[:, None]).sum(axis=0)
        hess[:p, p] = cross
        hess[p, :p] = cross
        hess[p, p] = np.sum(wgt * nodes[:, None] ** 2)
        hess += 1e-9 * np.eye(p + 1)
        try:
            delta = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            delta = grad / np.maximum(np.diag(hess), 1e-6)
        step = 1.0
        while step > 1e-6:
            a_new = a + step * delta[:p]
            s_new = sigma + step * delta[p]
            q_new = _class_q(a_new, s_new, r0, r1, nodes)
            if np.isfinite(q_new) and q_new >= q_old:
                a, sigma, q_old = a_new, s_new, q_new
                break
            step *= 0.5
        else:
            break
    return a, sigma


def _to_model(a: np.ndarray, sigma: np.ndarray, weights: np.ndarray, n_nodes: int) -> MixtureRaschModel:
    mu = a.mean(axis=1)
    # the likelihood is symmetric in the sign of sigma (symmetric nodes)
    return MixtureRaschModel(weights.copy(), a - mu[:, None], mu, np.abs(sigma), n_nodes)


def _single_start(x: np.ndarray, G: int, config: EMConfig, seed) -> MixtureFit:
    rng = np.random.default_rng(seed)
    n, p = x.shape
    nodes, lw = _quadrature(config.n_nodes)
    restarts = 0
    while True:
        resp = rng.dirichlet(np.ones(G), size=n)  # soft class assignments
        # start items at their class-weighted logits, abilities at unit spread
        frac = (resp.T @ x + 0.5) / (resp.sum(axis=0)[:, None] + 1.0)
        a = np.log(frac / (1.0 - frac))
        sigma = np.ones(G)
        weights = resp.mean(axis=0)
        trace: list[float] = []
        converged = False
        degenerate = False
        for it in range(config.max_iter):
            j = _joint_log(x, a, sigma, np.log(weights), nodes, lw)
            norm = logsumexp(j, axis=(1, 2))
            ll = float(norm.sum())
            if trace:
                prev = trace[-1]
                if ll < prev - config.monotone_tol * max(1.0, abs(prev)):
                    raise MonotonicityError(f"log-likelihood fell from {prev!r} to {ll!r} at iteration {it}")
            trace.append(ll)
            if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= config.rel_tol * abs(trace[-2]):
                converged = True
                break
            post = np.exp(j - norm[:, None, None])  # (n, G, Q)
            weights = post.sum(axis=(0, 2)) / n
            if weights.min() < 1.0 / (10 * n):
                degenerate = True
                break
            for g in range(G):
                r0 = post[:, g, :].sum(axis=0)
                r1 = post[:, g, :].T @ x
                a[g], sigma[g] = _m_step_class(a[g].copy(), sigma[g], r0, r1, nodes, config.newton_steps)
        if not degenerate:
            return MixtureFit(_to_model(a, sigma, weights, config.n_nodes), trace[-1], trace, converged,
                              start=-1, restarts=restarts)
        restarts += 1
        logger.info("degenerate class (weight %.2e); restarting", weights.min())
        if restarts > config.max_restarts:
            raise RuntimeError("every restart produced a degenerate class")


def em_fit(x: ItemResponseMatrix, G: int, config: EMConfig = EMConfig(), seed: int = 0) -> MixtureFit:
    """Best of ``config.n_starts`` EM runs from random soft assignments."""
    if G < 1:
        raise ValueError("G must be >= 1")
    data = x.x.astype(float)
    seeds = np.random.SeedSequence(seed).spawn(config.n_starts)
    if config.n_workers > 1 and config.n_starts > 1:
        with ProcessPoolExecutor(config.n_workers) as pool:
            fits = list(pool.map(_single_start, [data] * len(seeds), [G] * len(seeds),
                                 [config] * len(seeds), seeds))
    else:
        fits = [_single_start(data, G, config, s) for s in seeds]
    best = max(range(len(fits)), key=lambda i: (fits[i].loglik, -i))
    fit = fits[best]
    fit.start = best
    fit.all_logliks = [f.loglik for f in fits]
    return fit
