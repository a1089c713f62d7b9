"""Fit orchestration: chain, alignment, summaries, clustering and the run directory.

A run directory holds::

    samples.bin, log_posterior.csv, acceptance.csv, config.json   raw chain
    person_dist.csv, item_dist.csv                                 posterior mean distances
    beta_summary.csv, theta_summary.csv                            means and HPD intervals
    traces/person_traces.csv, traces/item_traces.csv, traces/diagnostics.csv
    clusters_person.csv, clusters_item.csv
    person_space.svg, item_space.svg
    manifest.json
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import io
from .clustering import ClusterAssignment, choose_k_neighbors
from .data import ItemResponseMatrix
from .likelihood import PriorConfig
from .plots import scatter_svg
from .postprocess import AlignedChain, PosteriorSummary, align_chain, distance_trace, posterior_distances
from .sampler import ChainOutput, SamplerConfig, run_chain

__all__ = [
    "ConvergenceGuardError",
    "ClusterSettings",
    "FitResult",
    "check_acceptance_guard",
    "fit_model",
    "cluster_both",
    "default_trace_pairs",
    "write_fit_outputs",
    "fit_to_directory",
]

logger = logging.getLogger(__name__)


class ConvergenceGuardError(RuntimeError):
    """A block's post-burn-in acceptance rate fell outside the guard band."""


@dataclass(frozen=True)
class ClusterSettings:
    g_person: int = 3
    g_item: int = 3
    k_candidates_person: Optional[tuple[int, ...]] = None
    k_candidates_item: Optional[tuple[int, ...]] = None
    seed: int = 0


@dataclass
class FitResult:
    x: ItemResponseMatrix
    chain: ChainOutput
    aligned: AlignedChain
    summary: PosteriorSummary
    person_clusters: Optional[ClusterAssignment] = None
    item_clusters: Optional[ClusterAssignment] = None
    wall_clock: dict[str, float] = field(default_factory=dict)


def check_acceptance_guard(chain: ChainOutput, lo: float = 0.01, hi: float = 0.99) -> dict[str, float]:
    """Post-burn-in acceptance per block; raise if any block is stuck or never rejects."""
    rates = {}
    for block in chain.ledger.blocks:
        prop = sum(r[3] for r in chain.ledger.history if r[1] == "sampling" and r[2] == block)
        acc = sum(r[4] for r in chain.ledger.history if r[1] == "sampling" and r[2] == block)
        if prop:
            rates[block] = acc / prop
    bad = {b: r for b, r in rates.items() if not lo <= r <= hi}
    if bad:
        raise ConvergenceGuardError(f"acceptance outside [{lo}, {hi}] after burn-in: {bad}")
    return rates


def fit_model(x: ItemResponseMatrix, prior: PriorConfig = PriorConfig(),
              sampler: SamplerConfig = SamplerConfig(), guard: Optional[tuple[float, float]] = (0.01, 0.99),
              progress=None) -> FitResult:
    t0 = time.perf_counter()
    chain = run_chain(x, prior, sampler, progress=progress)
    t1 = time.perf_counter()
    if guard is not None:
        check_acceptance_guard(chain, *guard)
    aligned = align_chain(chain)
    summary = posterior_distances(aligned, x)
    t2 = time.perf_counter()
    return FitResult(x, chain, aligned, summary, wall_clock={"chain": t1 - t0, "postprocess": t2 - t1})


def cluster_both(result: FitResult, settings: ClusterSettings = ClusterSettings()) -> FitResult:
    t0 = time.perf_counter()
    result.person_clusters = choose_k_neighbors(result.summary.person_dist, settings.g_person,
                                                settings.k_candidates_person, settings.seed)
    result.item_clusters = choose_k_neighbors(result.summary.item_dist, settings.g_item,
                                              settings.k_candidates_item, settings.seed)
    result.wall_clock["clustering"] = time.perf_counter() - t0
    return result


def default_trace_pairs(m: int, n_pairs: int = 5) -> list[tuple[int, int]]:
    """Pairs of evenly spaced units, used for trace diagnostics."""
    idx = np.unique(np.round(np.linspace(0, m - 1, n_pairs + 1)).astype(int))
    return [(int(a), int(b)) for a, b in zip(idx[:-1], idx[1:])]


def _ids(ids: Optional[Sequence[str]], m: int, prefix: str) -> list[str]:
    return list(ids) if ids is not None else [f"{prefix}{i + 1}" for i in range(m)]


def _write_traces(d: Path, result: FitResult) -> None:
    t = d / "traces"
    t.mkdir(exist_ok=True)
    x = result.x
    diag_rows = []
    for side, m in (("person", x.n), ("item", x.p)):
        tr = distance_trace(result.chain, default_trace_pairs(m), side, x)
        names = [f"{a}-{b}" for a, b in tr.pairs]
        io.write_rows(t / f"{side}_traces.csv", ["iteration"] + names,
                      ([result.chain.iterations[s]] + list(tr.traces[s]) for s in range(tr.traces.shape[0])))
        diag_rows += [(side, nm, tr.lag1[c], tr.ess[c]) for c, nm in enumerate(names)]
    io.write_rows(t / "diagnostics.csv", ["side", "pair", "lag1_autocorrelation", "ess"], diag_rows)


def write_fit_outputs(result: FitResult, out_dir, inputs: Sequence = (), config_echo: Optional[dict] = None) -> Path:
    """Write every artifact of a fit into ``out_dir`` and return its path."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    x, s = result.x, result.summary
    persons = _ids(x.row_ids, x.n, "P")
    items = _ids(x.col_ids, x.p, "I")
    io.save_chain(result.chain, d)
    io.write_matrix_csv(d / "person_dist.csv", s.person_dist, persons)
    io.write_matrix_csv(d / "item_dist.csv", s.item_dist, items)
    io.write_rows(d / "beta_summary.csv", ["item", "mean", "hpd_lower", "hpd_upper", "total_correct"],
                  ((items[i], s.beta_mean[i], s.beta_hpd[i, 0], s.beta_hpd[i, 1], x.item_totals[i])
                   for i in range(x.p)))
    scores = x.person_scores
    io.write_rows(d / "theta_summary.csv", ["person", "mean", "hpd_lower", "hpd_upper", "score", "zero_score"],
                  ((persons[k], s.theta_mean[k], s.theta_hpd[k, 0], s.theta_hpd[k, 1], scores[k], scores[k] == 0)
                   for k in range(x.n)))
    io.write_rows(d / "positions_person.csv", ["person"] + [f"z{j + 1}" for j in range(s.z_mean.shape[1])],
                  ([persons[k]] + list(s.z_mean[k]) for k in range(x.n)))
    io.write_rows(d / "positions_item.csv", ["item"] + [f"w{j + 1}" for j in range(s.w_mean.shape[1])],
                  ([items[i]] + list(s.w_mean[i]) for i in range(x.p)))
    _write_traces(d, result)
    pc, ic = result.person_clusters, result.item_clusters
    if pc is not None:
        io.write_rows(d / "clusters_person.csv", ["person", "cluster"],
                      ((persons[k], pc.labels[k] + 1) for k in range(x.n)))
    if ic is not None:
        io.write_rows(d / "clusters_item.csv", ["item", "cluster"],
                      ((items[i], ic.labels[i] + 1) for i in range(x.p)))
    plabels = pc.labels if pc is not None else np.zeros(x.n, dtype=int)
    ilabels = ic.labels if ic is not None else np.zeros(x.p, dtype=int)
    (d / "person_space.svg").write_text(scatter_svg(
        s.z_mean, plabels, "Person latent space (items as triangles)",
        overlay=s.w_mean, overlay_labels=np.zeros(x.p, dtype=int), point_names=persons, overlay_names=items))
    (d / "item_space.svg").write_text(scatter_svg(
        s.w_mean, ilabels, "Item latent space", point_names=items))
    write_manifest(d, result, inputs, config_echo)
    return d


def _cluster_info(c: Optional[ClusterAssignment]) -> Optional[dict]:
    if c is None:
        return None
    return {"n_clusters": c.n_clusters, "k_neighbors": c.k_neighbors,
            "explained_variance": c.explained_variance,
            "sizes": np.bincount(c.labels, minlength=c.n_clusters).tolist()}


def write_manifest(d: Path, result: FitResult, inputs: Sequence = (), config_echo: Optional[dict] = None) -> None:
    chain = result.chain
    rates = {b: chain.ledger.rate(b) for b in chain.ledger.blocks}
    sampling = {}
    for b in chain.ledger.blocks:
        rs = chain.ledger.window_rates("sampling").get(b, [])
        if rs:
            sampling[b] = float(np.mean(rs))
    manifest = {
        "config": config_echo or {"sampler": chain.config.to_dict(), "prior": asdict(chain.prior)},
        "inputs": {str(p): io.git_blob_hash(p) for p in inputs},
        "outputs": {p.relative_to(d).as_posix(): io.git_blob_hash(p)
                    for p in sorted(d.rglob("*")) if p.is_file() and p.name != "manifest.json"},
        "wall_clock_seconds": result.wall_clock,
        "acceptance": {"overall": rates, "sampling_window_mean": sampling},
        "final_jumps": chain.final_jumps,
        "n_samples": chain.n_samples,
        "reference_sample": result.aligned.reference,
        "rank_deficient_samples": int(result.aligned.rank_deficient.sum()),
        "zero_score_persons": [int(k) for k in result.x.zero_score_persons()],
        "clusters": {"person": _cluster_info(result.person_clusters), "item": _cluster_info(result.item_clusters)},
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def fit_to_directory(x: ItemResponseMatrix, out_dir, prior: PriorConfig = PriorConfig(),
                     sampler: SamplerConfig = SamplerConfig(), clusters: ClusterSettings = ClusterSettings(),
                     inputs: Sequence = (), config_echo: Optional[dict] = None,
                     guard: Optional[tuple[float, float]] = (0.01, 0.99)) -> FitResult:
    result = cluster_both(fit_model(x, prior, sampler, guard), clusters)
    write_fit_outputs(result, out_dir, inputs, config_echo)
    return result
