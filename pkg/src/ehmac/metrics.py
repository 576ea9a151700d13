"""Delivery probability and time efficiency of TDMA, FA and DFA.

All formulas take the energy ccdf at the start of a round (stationary or
at a given round index) and, for the ALOHA variants, a capture table.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .capture import CaptureTable, build_capture_table
from .markov import (EnergyDistribution, build_transition_matrix, steady_state,
                     transient_evolution)
from .model import SystemConfig


class MetricsError(ValueError):
    pass


@dataclass
class MetricsReport:
    protocol: str
    p_d: float
    p_t: float
    p_c: np.ndarray = field(default_factory=lambda: np.ones(1))
    p_tk: Optional[np.ndarray] = None
    backlog: Optional[np.ndarray] = None
    addends: Optional[np.ndarray] = None
    source: str = "steady-state"
    energy: Optional[EnergyDistribution] = None
    table: Optional[CaptureTable] = None


@dataclass(frozen=True)
class TradeoffPoint:
    protocol: str
    rho: float
    p_d: float
    p_t: float


def delivery_tdma(G: EnergyDistribution) -> float:
    return G.G_eps(1)


def delivery_fa(G: EnergyDistribution, table: CaptureTable) -> float:
    return G.G_eps(1) * float(table.p_marg[0])


def delivery_dfa(G: EnergyDistribution, table: CaptureTable):
    """DFA delivery probability and its per-frame addends.

    Frame ``k`` contributes when the sensor can pay ``k`` transmissions,
    lost the previous ``k - 1`` contentions and wins this one.
    """
    pc = np.asarray(table.p_marg, dtype=float)
    lost_before = np.concatenate([[1.0], np.cumprod(1.0 - pc)[:-1]])
    afford = np.array([G.G_eps(k) for k in range(1, pc.size + 1)])
    addends = afford * pc * lost_before
    return float(addends.sum()), addends


def time_eff_tdma(alpha: float, G: EnergyDistribution) -> float:
    return alpha * G.G_eps(1)


def time_eff_fa(table: CaptureTable) -> float:
    return float(table.p_slot[0])


def expected_backlogs(table: CaptureTable, G: EnergyDistribution, M: int, alpha: float) -> np.ndarray:
    pc = np.asarray(table.p_marg, dtype=float)
    lost_before = np.concatenate([[1.0], np.cumprod(1.0 - pc)[:-1]])
    afford = np.array([G.G_eps(k) for k in range(1, pc.size + 1)])
    return M * alpha * afford * lost_before


def time_eff_dfa(table: CaptureTable, G: EnergyDistribution, M: int, alpha: float):
    """Frame efficiencies averaged with expected frame lengths as weights.

    Returns ``(p_t, E[B_k])``.
    """
    EB = expected_backlogs(table, G, M, alpha)
    total = EB.sum()
    if total <= 0:
        raise MetricsError("all expected backlogs are zero (alpha = 0 or no stored energy)")
    return float(np.dot(table.p_slot, EB) / total), EB


def evaluate(config: SystemConfig, G: EnergyDistribution, table: CaptureTable) -> MetricsReport:
    """Metrics for one protocol given the energy law and capture table."""
    proto = config.protocol
    if proto == "TDMA":
        return MetricsReport(proto, delivery_tdma(G), time_eff_tdma(config.alpha, G),
                             source=G.tag, energy=G, table=table)
    if proto == "FA":
        EB = np.array([config.M * config.alpha * G.G_eps(1)])
        return MetricsReport(proto, delivery_fa(G, table), time_eff_fa(table),
                             p_c=table.p_marg[:1].copy(), p_tk=table.p_slot[:1].copy(),
                             backlog=EB, source=G.tag, energy=G, table=table)
    p_d, addends = delivery_dfa(G, table)
    p_t, EB = time_eff_dfa(table, G, config.M, config.alpha)
    return MetricsReport(proto, p_d, p_t, p_c=table.p_marg.copy(), p_tk=table.p_slot.copy(),
                         backlog=EB, addends=addends, source=G.tag, energy=G, table=table)


def analyze(config: SystemConfig, table: Optional[CaptureTable] = None,
            ir: Optional[int] = None) -> MetricsReport:
    """Stationary metrics, or metrics at round ``ir`` from the configured initial energy."""
    if table is None:
        table = build_capture_table(config)
    tm = build_transition_matrix(config, table)
    if ir is None:
        G = steady_state(tm, residual=config.tolerances.stationary_residual)
    else:
        G = transient_evolution(config.initial_pmf(), ir, tm)
    return evaluate(config, G, table)


def pareto_envelope(points: Sequence[TradeoffPoint], bin_width: float = 0.005) -> List[TradeoffPoint]:
    """Best delivery probability per time-efficiency bin, dominated points dropped.

    The result is sorted by increasing ``p_t`` with strictly decreasing ``p_d``.
    """
    best = {}
    for pt in points:
        b = int(np.floor(pt.p_t / bin_width + 1e-9))
        if b not in best or pt.p_d > best[b].p_d:
            best[b] = pt
    out: List[TradeoffPoint] = []
    for b in sorted(best, reverse=True):
        pt = best[b]
        if not out or pt.p_d > out[-1].p_d:
            out.append(pt)
    return out[::-1]


def tradeoff_curve(config: SystemConfig, rho_grid: Sequence[float],
                   bin_width: float = 0.005) -> List[TradeoffPoint]:
    if len(rho_grid) == 0:
        raise MetricsError("empty rho grid")
    pts = []
    for rho in rho_grid:
        r = analyze(config.replace(rho=float(rho)))
        pts.append(TradeoffPoint(config.protocol, float(rho), r.p_d, r.p_t))
    return pareto_envelope(pts, bin_width)
