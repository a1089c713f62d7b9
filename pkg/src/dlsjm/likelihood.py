"""Exact model math for the doubly latent space joint model.

Person layers use the logit ``beta_i - ||z_k - z_l||`` and item layers use
``theta_k - ||w_i - w_j||``, where ``w_i`` is the mean position of the
respondents who answered item ``i`` correctly. Each undirected pair is summed
once unless ``ordered_pairs`` is set, which doubles every network term.

These functions favour clarity over speed and serve as the reference for the
incremental kernels used by the sampler.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.special import gammaln

from .data import DegenerateItemError, ItemResponseMatrix

__all__ = [
    "NumericalError",
    "PriorConfig",
    "ModelState",
    "item_positions",
    "pair_distance",
    "distance_matrix",
    "softplus",
    "person_loglik",
    "item_loglik",
    "joint_log_likelihood",
    "log_prior",
    "z_prior_logpdf",
    "log_posterior",
    "logpost_beta",
    "logpost_theta",
    "logpost_z",
    "sigma_z_posterior_params",
    "sigma_z_logpdf",
]

LOG_2PI = np.log(2.0 * np.pi)


class NumericalError(ArithmeticError):
    """A log-likelihood or log-posterior evaluated to a non-finite value."""


@dataclass(frozen=True)
class PriorConfig:
    sigma_beta_sq: float = 100.0
    sigma_theta_sq: float = 100.0
    a_sigma: float = 0.01
    b_sigma: float = 0.01
    # count each undirected edge twice, as in a product over k != l
    ordered_pairs: bool = False

    def __post_init__(self):
        for name in ("sigma_beta_sq", "sigma_theta_sq", "a_sigma", "b_sigma"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")

    @property
    def pair_weight(self) -> float:
        return 2.0 if self.ordered_pairs else 1.0


@dataclass
class ModelState:
    """One point of the parameter space: intercepts, latent positions and ``sigma_z^2``."""

    beta: np.ndarray
    theta: np.ndarray
    sigma_z_sq: float
    z: np.ndarray

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.z.ndim == 1:
            self.z = self.z[:, None]
        self.sigma_z_sq = float(self.sigma_z_sq)
        if not self.sigma_z_sq > 0:
            raise ValueError("sigma_z_sq must be positive")
        if self.z.shape[0] != self.theta.shape[0]:
            raise ValueError("z and theta disagree on the number of respondents")

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def dim(self) -> int:
        return self.z.shape[1]

    def copy(self) -> "ModelState":
        return ModelState(self.beta.copy(), self.theta.copy(), self.sigma_z_sq, self.z.copy())

    def with_(self, **changes) -> "ModelState":
        return replace(self.copy(), **changes)

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.beta))
            and np.all(np.isfinite(self.theta))
            and np.all(np.isfinite(self.z))
            and np.isfinite(self.sigma_z_sq)
        )


def softplus(x):
    """``log(1 + exp(x))`` without overflow."""
    return np.logaddexp(0.0, x)


def item_positions(z: np.ndarray, x: ItemResponseMatrix) -> np.ndarray:
    """Mean latent position of the correct responders to each item (``p x D``)."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    c = x.item_totals
    if np.any(c == 0):
        raise DegenerateItemError(np.flatnonzero(c == 0).tolist(), x.col_ids)
    return (x.x.T.astype(float) @ z) / c[:, None]


def pair_distance(a, b) -> float:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def distance_matrix(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    return squareform(pdist(points))


def _bernoulli_sum(y: np.ndarray, eta: np.ndarray) -> float:
    return float(np.sum(y * eta - softplus(eta)))


def person_loglik(beta: np.ndarray, z: np.ndarray, x: ItemResponseMatrix) -> float:
    """Sum over person layers; one term per item and unordered respondent pair."""
    z = np.atleast_2d(np.asarray(z, dtype=float).T).T
    d = pdist(z)
    k, l = np.triu_indices(x.n, 1)
    y = x.x[k] * x.x[l]  # (pairs, items)
    eta = np.asarray(beta, dtype=float)[None, :] - d[:, None]
    return _bernoulli_sum(y, eta)


def item_loglik(theta: np.ndarray, z: np.ndarray, x: ItemResponseMatrix) -> float:
    """Sum over item layers; one term per respondent and unordered item pair."""
    w = item_positions(z, x)
    d = pdist(w)
    i, j = np.triu_indices(x.p, 1)
    u = x.x[:, i] * x.x[:, j]  # (persons, item pairs)
    eta = np.asarray(theta, dtype=float)[:, None] - d[None, :]
    return _bernoulli_sum(u, eta)


def _check(value: float, what: str) -> float:
    if not np.isfinite(value):
        raise NumericalError(f"{what} is not finite")
    return value


def joint_log_likelihood(state: ModelState, x: ItemResponseMatrix, ordered_pairs: bool = False) -> float:
    if not state.is_finite():
        raise NumericalError("model state has non-finite entries")
    weight = 2.0 if ordered_pairs else 1.0
    total = person_loglik(state.beta, state.z, x) + item_loglik(state.theta, state.z, x)
    return _check(weight * total, "joint log-likelihood")


def _normal_logpdf(v, var: float) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return -0.5 * (LOG_2PI + np.log(var) + v * v / var)


def z_prior_logpdf(z: np.ndarray, sigma_z_sq: float) -> float:
    """``sum_k log N(z_k | 0, sigma_z^2 I)``."""
    z = np.asarray(z, dtype=float)
    return float(np.sum(_normal_logpdf(z, sigma_z_sq)))


def sigma_z_logpdf(sigma_z_sq: float, shape: float, scale: float) -> float:
    """Inverse-gamma log-density."""
    s = float(sigma_z_sq)
    return float(shape * np.log(scale) - gammaln(shape) - (shape + 1.0) * np.log(s) - scale / s)


def log_prior(state: ModelState, prior: PriorConfig) -> float:
    return float(
        np.sum(_normal_logpdf(state.beta, prior.sigma_beta_sq))
        + np.sum(_normal_logpdf(state.theta, prior.sigma_theta_sq))
        + z_prior_logpdf(state.z, state.sigma_z_sq)
        + sigma_z_logpdf(state.sigma_z_sq, prior.a_sigma, prior.b_sigma)
    )


def log_posterior(state: ModelState, x: ItemResponseMatrix, prior: PriorConfig) -> float:
    """Unnormalized joint log posterior, including every prior term."""
    ll = joint_log_likelihood(state, x, prior.ordered_pairs)
    return _check(ll + log_prior(state, prior), "log posterior")


def logpost_beta(i: int, beta_i: float, state: ModelState, x: ItemResponseMatrix, prior: PriorConfig) -> float:
    """Prior for ``beta_i`` plus every person-layer term of item ``i``."""
    d = pdist(state.z)
    k, l = np.triu_indices(x.n, 1)
    y = x.x[k, i] * x.x[l, i]
    ll = _bernoulli_sum(y, beta_i - d)
    value = float(_normal_logpdf(beta_i, prior.sigma_beta_sq)) + prior.pair_weight * ll
    return _check(value, f"log posterior of beta[{i}]")


def logpost_theta(k: int, theta_k: float, state: ModelState, x: ItemResponseMatrix, prior: PriorConfig) -> float:
    """Prior for ``theta_k`` plus every item-layer term of respondent ``k``."""
    d = pdist(item_positions(state.z, x))
    i, j = np.triu_indices(x.p, 1)
    u = x.x[k, i] * x.x[k, j]
    ll = _bernoulli_sum(u, theta_k - d)
    value = float(_normal_logpdf(theta_k, prior.sigma_theta_sq)) + prior.pair_weight * ll
    return _check(value, f"log posterior of theta[{k}]")


def logpost_z(k: int, z_k, state: ModelState, x: ItemResponseMatrix, prior: PriorConfig) -> float:
    """Prior for ``z_k`` plus all terms whose distance depends on ``z_k``.

    On the person side those are the pairs ``(k, l)`` in every layer. On the
    item side they are the pairs ``(i, j)`` where ``k`` answered ``i`` or ``j``
    correctly, since only those item positions move with ``z_k``.
    """
    z = state.z.copy()
    z[k] = np.asarray(z_k, dtype=float)
    if not np.all(np.isfinite(z[k])):
        raise NumericalError(f"z[{k}] is not finite")
    X = x.x

    others = np.arange(x.n) != k
    d_person = np.sqrt(np.sum((z[others] - z[k]) ** 2, axis=1))
    y = X[k][None, :] * X[others]  # (n-1, p)
    person = _bernoulli_sum(y, state.beta[None, :] - d_person[:, None])

    w = item_positions(z, x)
    i, j = np.triu_indices(x.p, 1)
    touched = (X[k, i] == 1) | (X[k, j] == 1)
    i, j = i[touched], j[touched]
    d_item = np.sqrt(np.sum((w[i] - w[j]) ** 2, axis=1))
    u = X[:, i] * X[:, j]  # (n, touched pairs)
    item = _bernoulli_sum(u, state.theta[:, None] - d_item[None, :])

    value = z_prior_logpdf(z[k], state.sigma_z_sq) + prior.pair_weight * (person + item)
    return _check(value, f"log posterior of z[{k}]")


def sigma_z_posterior_params(z: np.ndarray, prior: PriorConfig) -> tuple[float, float]:
    """Inverse-gamma ``(shape, scale)`` of ``sigma_z^2`` given the latent positions."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    n, dim = z.shape
    return prior.a_sigma + 0.5 * n * dim, prior.b_sigma + 0.5 * float(np.sum(z * z))
