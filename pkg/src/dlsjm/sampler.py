"""Metropolis-within-Gibbs sampler for the doubly latent space joint model.

One sweep updates, in order: every ``z_k`` (random order, Gaussian random
walk), ``sigma_z^2`` (exact inverse-gamma draw), every ``beta_i`` and every
``theta_k`` (Gaussian random walks). Proposal scales for the latent positions
depend on the respondent's total score, since high-score respondents sit in
the dense centre of the configuration and tolerate only short moves.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels as K
from .data import ItemResponseMatrix
from .likelihood import (
    ModelState,
    PriorConfig,
    distance_matrix,
    item_positions,
    log_posterior,
    sigma_z_posterior_params,
)

__all__ = [
    "BLOCKS",
    "SamplerConfig",
    "AcceptanceLedger",
    "ChainOutput",
    "initialize_state",
    "z_buckets",
    "adapt_proposals",
    "ChainEngine",
    "sweep",
    "run_chain",
]

logger = logging.getLogger(__name__)

BLOCKS = ("z", "sigma_z", "beta", "theta")
Z_BUCKETS = ("z_q1", "z_q2", "z_q3", "z_q4")


@dataclass(frozen=True)
class SamplerConfig:
    n_iterations: int = 55_000
    burn_in: int = 5_000
    thin: int = 10
    jump_beta: float = 0.1
    jump_theta: float = 3.0
    # lowest-score quartile first
    jump_z_schedule: tuple[float, ...] = (1.6, 0.8, 0.4, 0.2)
    # multiplies jump_z_schedule; None means 1/sqrt(p)
    jump_z_scale: Optional[float] = None
    target_accept_lo: float = 0.20
    target_accept_hi: float = 0.40
    adapt_window: int = 500
    seed: int = 0
    dim: int = 2
    adapt: bool = True
    update: tuple[str, ...] = BLOCKS
    table_step: float = K.TABLE_STEP

    def __post_init__(self):
        object.__setattr__(self, "jump_z_schedule", tuple(float(s) for s in self.jump_z_schedule))
        object.__setattr__(self, "update", tuple(self.update))
        if not 0 <= self.burn_in < self.n_iterations:
            raise ValueError("need 0 <= burn_in < n_iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        jumps = (self.jump_beta, self.jump_theta) + self.jump_z_schedule
        if len(self.jump_z_schedule) != len(Z_BUCKETS) or min(jumps) <= 0:
            raise ValueError("need four positive z jump sizes and positive beta/theta jumps")
        if self.jump_z_scale is not None and not self.jump_z_scale > 0:
            raise ValueError("jump_z_scale must be positive")
        if not 0 < self.target_accept_lo < self.target_accept_hi < 1:
            raise ValueError("need 0 < target_accept_lo < target_accept_hi < 1")
        if self.adapt_window < 1:
            raise ValueError("adapt_window must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        unknown = set(self.update) - set(BLOCKS)
        if unknown:
            raise ValueError(f"unknown blocks {sorted(unknown)}")

    @property
    def n_samples(self) -> int:
        return (self.n_iterations - self.burn_in) // self.thin

    def block_names(self) -> tuple[str, ...]:
        names = []
        if "z" in self.update:
            names.extend(Z_BUCKETS)
        names.extend(b for b in ("beta", "theta") if b in self.update)
        return tuple(names)

    def initial_jumps(self, p: int) -> dict[str, float]:
        """Starting jump sizes; the z schedule shrinks with the number of item layers."""
        scale = self.jump_z_scale if self.jump_z_scale is not None else 1.0 / math.sqrt(p)
        jumps = {b: s * scale for b, s in zip(Z_BUCKETS, self.jump_z_schedule)}
        jumps["beta"] = self.jump_beta
        jumps["theta"] = self.jump_theta
        return {b: jumps[b] for b in self.block_names()}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["jump_z_schedule"] = list(self.jump_z_schedule)
        d["update"] = list(self.update)
        return d


@dataclass
class AcceptanceLedger:
    """Proposal and acceptance counts per block, per window and overall."""

    blocks: tuple[str, ...]
    proposals: dict[str, int] = field(default_factory=dict)
    acceptances: dict[str, int] = field(default_factory=dict)
    window_proposals: dict[str, int] = field(default_factory=dict)
    window_acceptances: dict[str, int] = field(default_factory=dict)
    # one row per closed window: (iteration, phase, block, proposals, acceptances, jump)
    history: list[tuple[int, str, str, int, int, float]] = field(default_factory=list)

    def __post_init__(self):
        for store in (self.proposals, self.acceptances, self.window_proposals, self.window_acceptances):
            for b in self.blocks:
                store.setdefault(b, 0)

    def record(self, block: str, proposed: int, accepted: int) -> None:
        self.proposals[block] += proposed
        self.acceptances[block] += accepted
        self.window_proposals[block] += proposed
        self.window_acceptances[block] += accepted

    def window_rate(self, block: str) -> float:
        prop = self.window_proposals[block]
        return self.window_acceptances[block] / prop if prop else float("nan")

    def rate(self, block: str) -> float:
        prop = self.proposals[block]
        return self.acceptances[block] / prop if prop else float("nan")

    def close_window(self, iteration: int, phase: str, jumps: dict[str, float]) -> None:
        for b in self.blocks:
            self.history.append(
                (iteration, phase, b, self.window_proposals[b], self.window_acceptances[b], jumps[b])
            )
            self.window_proposals[b] = 0
            self.window_acceptances[b] = 0

    def window_rates(self, phase: Optional[str] = None) -> dict[str, list[float]]:
        out: dict[str, list[float]] = {b: [] for b in self.blocks}
        for _, ph, b, prop, acc, _ in self.history:
            if prop and (phase is None or ph == phase):
                out[b].append(acc / prop)
        return out


@dataclass
class ChainOutput:
    beta: np.ndarray  # (S, p)
    theta: np.ndarray  # (S, n)
    sigma_z_sq: np.ndarray  # (S,)
    z: np.ndarray  # (S, n, D)
    log_posterior: np.ndarray  # (S,)
    iterations: np.ndarray  # (S,) 1-based sweep index of each retained sample
    ledger: AcceptanceLedger
    config: SamplerConfig
    prior: PriorConfig
    final_jumps: dict[str, float]
    buckets: np.ndarray  # (n,) z-proposal bucket of each respondent

    @property
    def n_samples(self) -> int:
        return self.beta.shape[0]

    def state(self, s: int) -> ModelState:
        return ModelState(self.beta[s], self.theta[s], float(self.sigma_z_sq[s]), self.z[s])


def initialize_state(x: ItemResponseMatrix, prior: PriorConfig, seed, dim: int = 2) -> ModelState:
    """Start at ``beta = theta = 0``, ``sigma_z^2 = 1`` and ``z_k ~ N(0, 0.25 I)``."""
    rng = np.random.default_rng(seed)
    z = rng.normal(0.0, 0.5, size=(x.n, dim))
    return ModelState(np.zeros(x.p), np.zeros(x.n), 1.0, z)


def z_buckets(scores: np.ndarray) -> np.ndarray:
    """Quartile of each respondent's total score (0 = lowest quartile)."""
    scores = np.asarray(scores, dtype=float)
    cuts = np.quantile(scores, [0.25, 0.5, 0.75])
    return np.searchsorted(cuts, scores, side="left").astype(np.int64)


def adapt_proposals(ledger: AcceptanceLedger, jumps: dict[str, float], config: SamplerConfig) -> dict[str, float]:
    """Rescale each block's jump size from its current window acceptance rate."""
    out = dict(jumps)
    for b in ledger.blocks:
        rate = ledger.window_rate(b)
        if math.isnan(rate):
            continue
        if rate > config.target_accept_hi:
            out[b] = jumps[b] * 1.25
        elif rate < config.target_accept_lo:
            out[b] = jumps[b] * 0.8
    return out


def _pair_sums(dists: np.ndarray):
    dists = np.ascontiguousarray(dists)
    if dists.size <= K.EXACT_PAIR_LIMIT:
        return dists, np.ones((dists.size, 1))
    return K.bin_distances(dists, K.BIN_STEP, K.BIN_ORDER)


class ChainEngine:
    """Mutable sampler state with the caches the incremental updates need."""

    def __init__(self, x: ItemResponseMatrix, prior: PriorConfig, config: SamplerConfig,
                 state: ModelState, rng: np.random.Generator, jumps: Optional[dict[str, float]] = None):
        x.check_fittable()
        self.x = x
        self.prior = prior
        self.config = config
        self.rng = rng
        X = np.ascontiguousarray(x.x, dtype=np.int8)
        Xf = X.astype(float)
        self._X = X
        self._co_person = Xf @ Xf.T
        np.fill_diagonal(self._co_person, 0.0)
        self._co_item = Xf.T @ Xf
        np.fill_diagonal(self._co_item, 0.0)
        self._totals = x.item_totals.astype(float)
        s = x.person_scores.astype(float)
        c = self._totals
        self._edges_theta = s * (s - 1) / 2
        self._edges_beta = c * (c - 1) / 2
        self._iu_person = np.triu_indices(x.n, 1)
        self._iu_item = np.triu_indices(x.p, 1)

        self.buckets = z_buckets(x.person_scores)
        self.ledger = AcceptanceLedger(config.block_names())
        self.jumps = dict(jumps) if jumps is not None else config.initial_jumps(x.p)

        self.beta = np.array(state.beta, dtype=float)
        self.theta = np.array(state.theta, dtype=float)
        self.sigma_z_sq = float(state.sigma_z_sq)
        self.z = np.ascontiguousarray(state.z, dtype=float).copy()
        if self.z.shape[1] != config.dim:
            raise ValueError(f"state has dimension {self.z.shape[1]}, config expects {config.dim}")
        self.refresh_geometry()

    def refresh_geometry(self) -> None:
        self.zdist = distance_matrix(self.z)
        self.w = np.ascontiguousarray(item_positions(self.z, self.x))
        self.wdist = distance_matrix(self.w)

    @property
    def state(self) -> ModelState:
        return ModelState(self.beta.copy(), self.theta.copy(), self.sigma_z_sq, self.z.copy())

    def _table(self, offsets: np.ndarray, max_dist: float):
        step = self.config.table_step
        n_nodes = min(int(math.ceil(1.25 * max_dist / step)) + 2, 4096)
        return K.build_table(offsets, n_nodes, step)

    def _z_jumps(self) -> np.ndarray:
        sched = np.array([self.jumps[b] for b in Z_BUCKETS])
        return sched[self.buckets]

    def sweep(self) -> None:
        cfg = self.config
        rng = self.rng
        pw = self.prior.pair_weight
        if "z" in cfg.update:
            n, dim = self.z.shape
            order = rng.permutation(n)
            eps = rng.standard_normal((n, dim))
            logu = np.log(rng.random(n))
            h = self._table(self.beta, float(self.zdist.max()))
            g = self._table(self.theta, float(self.wdist.max()))
            accepted = np.zeros(n, dtype=np.bool_)
            K.z_sweep(order, eps, logu, self._z_jumps(), self.z, self.zdist, self.w, self.wdist,
                      self._X, self._co_person, self._co_item, self._totals,
                      self.beta, h[0], h[1], h[2], self.theta, g[0], g[1], g[2],
                      cfg.table_step, self.sigma_z_sq, pw, accepted)
            for q, name in enumerate(Z_BUCKETS):
                members = self.buckets == q
                self.ledger.record(name, int(members.sum()), int(accepted[members].sum()))
        if "sigma_z" in cfg.update:
            shape, scale = sigma_z_posterior_params(self.z, self.prior)
            self.sigma_z_sq = scale / rng.gamma(shape)
        if "beta" in cfg.update:
            p = self.beta.shape[0]
            eps = rng.standard_normal(p)
            logu = np.log(rng.random(p))
            accepted = np.zeros(p, dtype=np.bool_)
            centres, moments = _pair_sums(self.zdist[self._iu_person])
            K.intercept_sweep(self.beta, eps, logu, self.jumps["beta"], self._edges_beta, centres, moments,
                              self.prior.sigma_beta_sq, pw, accepted)
            self.ledger.record("beta", p, int(accepted.sum()))
        if "theta" in cfg.update:
            n = self.theta.shape[0]
            eps = rng.standard_normal(n)
            logu = np.log(rng.random(n))
            accepted = np.zeros(n, dtype=np.bool_)
            centres, moments = _pair_sums(self.wdist[self._iu_item])
            K.intercept_sweep(self.theta, eps, logu, self.jumps["theta"], self._edges_theta, centres, moments,
                              self.prior.sigma_theta_sq, pw, accepted)
            self.ledger.record("theta", n, int(accepted.sum()))


def sweep(state: ModelState, x: ItemResponseMatrix, prior: PriorConfig, config: SamplerConfig,
          rng: np.random.Generator, jumps: Optional[dict[str, float]] = None) -> ModelState:
    """Run one full sweep from ``state`` and return the new state (input untouched)."""
    engine = ChainEngine(x, prior, config, state, rng, jumps)
    engine.sweep()
    return engine.state


def run_chain(x: ItemResponseMatrix, prior: PriorConfig, config: SamplerConfig,
              state: Optional[ModelState] = None,
              progress: Optional[Callable[[int], None]] = None) -> ChainOutput:
    """Burn in with proposal adaptation, then sample with frozen proposals and thin."""
    x.check_fittable()
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    if state is None:
        state = initialize_state(x, prior, seeds[0], config.dim)
    rng = np.random.default_rng(seeds[1])
    engine = ChainEngine(x, prior, config, state, rng)

    S = config.n_samples
    n, p, dim = x.n, x.p, config.dim
    out_beta = np.empty((S, p))
    out_theta = np.empty((S, n))
    out_sigma = np.empty(S)
    out_z = np.empty((S, n, dim))
    out_lp = np.empty(S)
    out_iter = np.empty(S, dtype=np.int64)

    s = 0
    for t in range(1, config.n_iterations + 1):
        engine.sweep()
        burning = t <= config.burn_in
        if t % config.adapt_window == 0 or t == config.burn_in:
            if burning and config.adapt:
                engine.jumps = adapt_proposals(engine.ledger, engine.jumps, config)
            engine.ledger.close_window(t, "burn_in" if burning else "sampling", engine.jumps)
        if not burning and (t - config.burn_in) % config.thin == 0 and s < S:
            st = engine.state
            out_beta[s] = st.beta
            out_theta[s] = st.theta
            out_sigma[s] = st.sigma_z_sq
            out_z[s] = st.z
            out_lp[s] = log_posterior(st, x, prior)
            out_iter[s] = t
            s += 1
        if progress is not None:
            progress(t)
    if config.n_iterations % config.adapt_window and config.n_iterations != config.burn_in:
        engine.ledger.close_window(config.n_iterations, "sampling", engine.jumps)

    logger.info("chain done: %d samples, acceptance %s", S,
                {b: round(engine.ledger.rate(b), 3) for b in engine.ledger.blocks})
    return ChainOutput(out_beta, out_theta, out_sigma, out_z, out_lp, out_iter, engine.ledger,
                       config, prior, dict(engine.jumps), engine.buckets)
