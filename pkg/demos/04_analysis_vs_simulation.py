"""Checking the analysis against a simulator that makes no approximation.

The analysis assumes the backlog is known and large and that gains are
independent across frames.  The simulator plays every round with the real
finite backlog and one gain per sensor per round.  A second run sizes the
frames from the fusion center's backlog estimate instead.

Run with ``python3 demos/04_analysis_vs_simulation.py`` (a few seconds).
"""

from ehmac.metrics import analyze
from ehmac.model import evaluation_config
from ehmac.sim import run_simulation

# %%
print("proto rho   mode       analysis p_d/p_t   simulation p_d/p_t (se)")
for proto in ("TDMA", "FA", "DFA"):
    for rho in (0.75, 1.5):
        a = analyze(evaluation_config(mu_H=0.35, rho=rho, protocol=proto))
        modes = ("known",) if proto == "TDMA" else ("known", "estimated")
        for mode in modes:
            cfg = evaluation_config(mu_H=0.35, rho=rho, protocol=proto, backlog_mode=mode)
            s = run_simulation(cfg, n_irs=5000, warmup=1000, seed=7)
            print(f"{proto:5} {rho:4}  {mode:9}  {a.p_d:.4f} / {a.p_t:.4f}    "
                  f"{s.p_d:.4f} / {s.p_t:.4f} ({s.se_p_t:.4f})")

# %% A look inside one estimated round
cfg = evaluation_config(mu_H=0.35, rho=1.0, protocol="DFA", backlog_mode="estimated")
_, traces = run_simulation(cfg, 1200, 1000, seed=3, keep_traces=True)
tr = traces[-1]
for k, (f, b, bh) in enumerate(zip(tr.frames, tr.backlog, tr.backlog_hat), start=1):
    print(f"frame {k}: true backlog {b:3}, estimate {bh:6.1f}, slots {f.L:3}, "
          f"success {f.N_D:3}, collided {f.N_C:3}, empty {f.N_E:3}")
