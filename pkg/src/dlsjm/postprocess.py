"""Procrustes post-processing, posterior summaries and distance-based diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .data import ItemResponseMatrix
from .likelihood import item_positions
from .sampler import ChainOutput

__all__ = [
    "AlignedChain",
    "PosteriorSummary",
    "DistanceTraces",
    "select_reference",
    "procrustes_align",
    "align_chain",
    "hpd_interval",
    "posterior_distances",
    "autocorrelation",
    "effective_sample_size",
    "distance_trace",
]


@dataclass
class AlignedChain:
    z: np.ndarray  # (S, n, D)
    reference: int
    disparity: np.ndarray  # (S,) squared Frobenius distance to the reference after alignment
    rank_deficient: np.ndarray  # (S,) bool
    chain: ChainOutput


@dataclass
class PosteriorSummary:
    person_dist: np.ndarray
    item_dist: np.ndarray
    beta_mean: np.ndarray
    beta_hpd: np.ndarray  # (p, 2)
    theta_mean: np.ndarray
    theta_hpd: np.ndarray  # (n, 2)
    z_mean: np.ndarray
    w_mean: np.ndarray
    sigma_z_sq_mean: float


@dataclass
class DistanceTraces:
    pairs: list[tuple[int, int]]
    side: str
    traces: np.ndarray  # (S, n_pairs)
    lag1: np.ndarray
    ess: np.ndarray


def select_reference(chain) -> int:
    """Index of the retained sample with the highest joint log posterior (earliest on ties)."""
    lp = chain.log_posterior if hasattr(chain, "log_posterior") else chain
    lp = np.asarray(lp, dtype=float)
    if lp.size == 0:
        raise ValueError("empty chain")
    return int(np.argmax(lp))


def _procrustes(sample: np.ndarray, reference: np.ndarray):
    sample = np.asarray(sample, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if sample.shape != reference.shape:
        raise ValueError(f"shape mismatch: {sample.shape} vs {reference.shape}")
    mu_s = sample.mean(axis=0)
    mu_r = reference.mean(axis=0)
    a = sample - mu_s
    b = reference - mu_r
    u, sv, vt = np.linalg.svd(a.T @ b)
    rotation = u @ vt
    aligned = a @ rotation + mu_r
    tol = sv.max(initial=0.0) * max(a.shape) * np.finfo(float).eps
    rank_deficient = bool(np.sum(sv > tol) < min(a.shape[1], a.shape[0]))
    return aligned, float(np.sum((aligned - reference) ** 2)), rank_deficient


def procrustes_align(sample: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Rotate/reflect and translate ``sample`` onto ``reference``; no scaling."""
    return _procrustes(sample, reference)[0]


def align_chain(chain: ChainOutput) -> AlignedChain:
    ref = select_reference(chain)
    target = chain.z[ref]
    S = chain.n_samples
    out = np.empty_like(chain.z)
    disparity = np.empty(S)
    flags = np.zeros(S, dtype=bool)
    for s in range(S):
        out[s], disparity[s], flags[s] = _procrustes(chain.z[s], target)
    return AlignedChain(out, ref, disparity, flags, chain)


def hpd_interval(draws: np.ndarray, level: float = 0.95) -> np.ndarray:
    """Shortest interval holding ``level`` of the sorted draws, along axis 0.

    Returns an array of shape ``(..., 2)``.
    """
    x = np.sort(np.asarray(draws, dtype=float), axis=0)
    N = x.shape[0]
    m = max(1, int(math.ceil(level * N)))
    widths = x[m - 1:] - x[: N - m + 1]
    start = np.argmin(widths, axis=0)
    lo = np.take_along_axis(x, start[None, ...], axis=0)[0]
    hi = np.take_along_axis(x, (start + m - 1)[None, ...], axis=0)[0]
    return np.stack([lo, hi], axis=-1)


def posterior_distances(aligned: AlignedChain, x: ItemResponseMatrix, level: float = 0.95) -> PosteriorSummary:
    """Posterior means of pairwise distances, positions and intercepts.

    Item positions are rebuilt from each aligned configuration rather than
    aligned on their own.
    """
    chain = aligned.chain
    S, n, dim = aligned.z.shape
    person = np.zeros(n * (n - 1) // 2)
    item = np.zeros(x.p * (x.p - 1) // 2)
    w_sum = np.zeros((x.p, dim))
    for s in range(S):
        z = aligned.z[s]
        w = item_positions(z, x)
        person += pdist(z)
        item += pdist(w)
        w_sum += w
    beta_mean = chain.beta.mean(axis=0)
    theta_mean = chain.theta.mean(axis=0)
    return PosteriorSummary(
        person_dist=squareform(person / S),
        item_dist=squareform(item / S),
        beta_mean=beta_mean,
        beta_hpd=hpd_interval(chain.beta, level),
        theta_mean=theta_mean,
        theta_hpd=hpd_interval(chain.theta, level),
        z_mean=aligned.z.mean(axis=0),
        w_mean=w_sum / S,
        sigma_z_sq_mean=float(chain.sigma_z_sq.mean()),
    )


def autocorrelation(trace: np.ndarray) -> np.ndarray:
    """Sample autocorrelation at every lag (FFT based); a flat trace gives all zeros past lag 0."""
    x = np.asarray(trace, dtype=float)
    N = x.size
    x = x - x.mean()
    var = float(x @ x)
    if var <= 0.0:
        out = np.zeros(N)
        out[0] = 1.0
        return out
    size = 1 << (2 * N - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:N]
    return acov / var


def effective_sample_size(trace: np.ndarray) -> float:
    """Geyer initial-positive-sequence ESS.

    A constant trace returns its length; anti-correlated traces are capped at
    ``N log10(N)``.
    """
    x = np.asarray(trace, dtype=float)
    N = x.size
    if N < 2 or np.ptp(x) == 0.0:
        return float(N)
    rho = autocorrelation(x)
    tau = -1.0
    for m in range(0, N // 2):
        gamma = rho[2 * m] + (rho[2 * m + 1] if 2 * m + 1 < N else 0.0)
        if gamma <= 0.0:
            break
        tau += 2.0 * gamma
    cap = N * math.log10(N)
    if tau <= 0.0:
        return float(cap)
    return float(min(N / tau, cap))


def distance_trace(chain: ChainOutput, pairs: Sequence[tuple[int, int]],
                   side: Literal["person", "item"] = "person",
                   x: ItemResponseMatrix | None = None) -> DistanceTraces:
    """Per-sample distance series for the requested pairs, with lag-1 autocorrelation and ESS."""
    pairs = [(int(a), int(b)) for a, b in pairs]
    if side == "item" and x is None:
        raise ValueError("item traces need the response matrix")
    S = chain.n_samples
    traces = np.empty((S, len(pairs)))
    for s in range(S):
        pts = chain.z[s] if side == "person" else item_positions(chain.z[s], x)
        for c, (a, b) in enumerate(pairs):
            traces[s, c] = np.sqrt(np.sum((pts[a] - pts[b]) ** 2))
    lag1 = np.array([autocorrelation(traces[:, c])[1] if S > 1 else 0.0 for c in range(len(pairs))])
    ess = np.array([effective_sample_size(traces[:, c]) for c in range(len(pairs))])
    return DistanceTraces(pairs, side, traces, lag1, ess)
