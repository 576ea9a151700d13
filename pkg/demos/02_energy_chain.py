"""The single-sensor energy chain, from a three-state toy to the full model.

Run with ``python3 demos/02_energy_chain.py``.
"""

# %% A chain small enough to solve by hand
# One unit of storage, one unit per transmission, a fair coin for the
# harvest and a measure every round.
import numpy as np

from ehmac.markov import (build_transition_matrix, stationary_distribution, steady_state,
                          transient_evolution)
from ehmac.model import EnergyConfig, HarvestModel, SystemConfig, evaluation_config, validate

toy = validate(SystemConfig(M=1, alpha=1.0, gamma_th=2.0, rho=1.0,
                            energy=EnergyConfig(delta=1.0, N=1, eps_units=1),
                            harvest=HarvestModel.from_pmf([0.5, 0.5]), protocol="TDMA"))
tm = build_transition_matrix(toy)
print(tm.index.labels())
print(tm.dense())
print("phi =", np.round(stationary_distribution(tm), 6))
print("energy at round start =", steady_state(tm).pmf)

# %% The evaluation scenario
# 501 storage levels, transmissions cost 50 of them.  TDMA and FA spend at
# most one transmission per round, so their chains coincide; DFA may spend
# up to ten.
for mu in (0.15, 0.35):
    for proto in ("TDMA", "FA", "DFA"):
        tm = build_transition_matrix(evaluation_config(mu_H=mu, protocol=proto))
        G = steady_state(tm)
        print(f"mu_H={mu} {proto:4}: {tm.index.size:5} states, "
              f"Pr[can transmit]={G.G_eps(1):.4f}, Pr[can transmit twice]={G.G_eps(2):.4f}")

# %% Starting from an empty battery
cfg = evaluation_config(mu_H=0.35, protocol="DFA", initial_energy="empty")
tm = build_transition_matrix(cfg)
final = steady_state(tm)
for n in (1, 5, 20, 50, 100, 200, 400):
    G = transient_evolution(cfg.initial_pmf(), n, tm)
    tv = 0.5 * np.abs(G.pmf - final.pmf).sum()
    print(f"round {n:3}: G(eps)={G.G_eps(1):.4f}  distance to steady state {tv:.2e}")
