"""Look inside one chain: proposal adaptation, distance traces, ESS and HPD intervals.

    python3 demos/02_chain_diagnostics.py
"""
import numpy as np

from dlsjm import PriorConfig, SamplerConfig, run_chain
from dlsjm.postprocess import align_chain, distance_trace, posterior_distances
from dlsjm.simgen import SimDesign, simulate

x = simulate(SimDesign(respondents_per_class=30), seed=3).responses
chain = run_chain(x, PriorConfig(), SamplerConfig(n_iterations=6000, burn_in=2000, thin=4, seed=3))

# Jump sizes move only during burn-in; each row is one adaptation window
print("window  phase     block   rate   jump")
for it, phase, block, prop, acc, jump in chain.ledger.history:
    if block in ("beta", "theta", "z_q1") and it % 1000 == 0:
        print(f"{it:6d}  {phase:8s}  {block:6s}  {acc / prop:.3f}  {jump:.4f}")

# Distances are identified even though positions are not, so traces are on distances
persons = distance_trace(chain, [(0, 1), (0, 45), (10, 80)], "person")
items = distance_trace(chain, [(0, 1), (0, 12)], "item", x)
for tr in (persons, items):
    for pair, lag1, ess in zip(tr.pairs, tr.lag1, tr.ess):
        print(f"{tr.side:6s} pair {pair}: lag-1 autocorrelation {lag1:.2f}, ESS {ess:.0f} of {chain.n_samples}")

# Posterior means of distances after Procrustes alignment, with 95% HPD intervals for intercepts
aligned = align_chain(chain)
summary = posterior_distances(aligned, x)
print(f"reference sample {aligned.reference}, sigma_z^2 posterior mean {summary.sigma_z_sq_mean:.3f}")
for i in range(4):
    lo, hi = summary.beta_hpd[i]
    print(f"item {i + 1}: beta mean {summary.beta_mean[i]:.2f}  95% HPD [{lo:.2f}, {hi:.2f}]")
nearest = np.argsort(summary.person_dist[0])[1:4]
print("respondents closest to respondent 1:", (nearest + 1).tolist())
