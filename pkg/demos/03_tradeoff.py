"""Delivery probability against time efficiency.

The frame-size factor rho trades the two: short frames waste few slots
but collide more.  TDMA has no such knob and sits at a single point.

Run with ``python3 demos/03_tradeoff.py``.
"""

import numpy as np

from ehmac.metrics import analyze, tradeoff_curve
from ehmac.model import evaluation_config

rho_grid = np.round(np.arange(0.5, 3.01, 0.25), 2)

# %% Sweep
for mu in (0.15, 0.35):
    print(f"\nmu_H = {mu}")
    print(" rho    FA p_d  FA p_t   DFA p_d DFA p_t")
    for rho in rho_grid:
        fa = analyze(evaluation_config(mu_H=mu, rho=rho, protocol="FA"))
        dfa = analyze(evaluation_config(mu_H=mu, rho=rho, protocol="DFA"))
        print(f"{rho:4}   {fa.p_d:.4f}  {fa.p_t:.4f}   {dfa.p_d:.4f}  {dfa.p_t:.4f}")
    td = analyze(evaluation_config(mu_H=mu, protocol="TDMA"))
    print(f"TDMA   {td.p_d:.4f}  {td.p_t:.4f}")

# %% Envelopes
# Each envelope keeps, per time-efficiency bin, the best delivery
# probability, and drops dominated points.
for proto in ("FA", "DFA", "TDMA"):
    env = tradeoff_curve(evaluation_config(mu_H=0.35, protocol=proto), rho_grid)
    print(proto, [(p.rho, round(p.p_t, 3), round(p.p_d, 3)) for p in env])
