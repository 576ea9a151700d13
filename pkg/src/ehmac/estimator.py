"""Backlog estimation at the fusion center.

The first frame is sized from the expected number of sensors with a
measure and enough energy.  Each later frame is sized from the slot
outcomes of the previous one: every collided slot hides ``beta_C``
transmitters and every successful slot ``beta_D - 1`` losers.  Only the
losers that can still afford another transmission are counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .capture import CaptureTable, poisson_weights, truncation_point
from .markov import EnergyDistribution

TERMINATION_THRESHOLD = 0.5
BETA_TAIL_MASS = 1e-16


@dataclass(frozen=True)
class FrameObservation:
    k: int
    N_D: int
    N_C: int
    N_E: int

    @property
    def L(self) -> int:
        return self.N_D + self.N_C + self.N_E

    def __post_init__(self):
        if min(self.N_D, self.N_C, self.N_E) < 0:
            raise ValueError("slot counts must be non-negative")


@dataclass(frozen=True)
class BetaTable:
    beta_D: np.ndarray
    beta_C: np.ndarray
    tail_bound: float = 0.0


def beta_means(table: CaptureTable, k: int, rho: Optional[float] = None):
    """Mean number of transmitters in a successful and in a collided slot of frame ``k``.

    Returns ``(beta_D, beta_C)``; ``beta_C`` is NaN when collisions are
    impossible.
    """
    rho = table.rho if rho is None else rho
    pc = table.p_cond[k - 1]
    # the table is cut at its own tail mass; the means need a longer sum, and
    # capture against that many interferers is negligible
    J = max(pc.size - 1, truncation_point(rho, BETA_TAIL_MASS))
    pc = np.pad(pc, (0, J + 1 - pc.size))
    # Y transmitters in a slot, Y = 0..J+1; a given one has Y-1 interferers
    y = np.arange(J + 2)
    w = poisson_weights(rho, J + 1)
    win = np.zeros(J + 2)
    win[1:] = y[1:] * pc
    win = np.minimum(win, 1.0)
    p_U = float(np.dot(win, w))
    lose = np.zeros(J + 2)
    lose[1:] = 1.0 - win[1:]
    p_C = 1.0 - p_U - w[0]
    beta_D = float(np.dot(y * win, w) / p_U)
    if p_C <= 1e-15:
        return beta_D, math.nan
    beta_C = float(np.dot(y * lose, w) / np.dot(lose, w))
    return beta_D, beta_C


def beta_table(table: CaptureTable) -> BetaTable:
    pairs = [beta_means(table, k) for k in range(1, table.frames + 1)]
    bd, bc = zip(*pairs)
    return BetaTable(np.asarray(bd), np.asarray(bc))


def initial_backlog(M: int, alpha: float, G: EnergyDistribution) -> float:
    return M * alpha * G.G_eps(1)


def update_backlog(obs: FrameObservation, beta_D: float, beta_C: float, G_cond: float) -> float:
    """Estimated backlog of frame ``obs.k + 1``."""
    if obs.N_D == 0 and obs.N_C == 0:
        return 0.0
    losers = (beta_D - 1.0) * obs.N_D
    if obs.N_C:
        losers += beta_C * obs.N_C
    return losers * G_cond


def frame_length(B_hat: float, rho: float) -> int:
    if B_hat <= 0:
        return 0
    return max(1, math.ceil(rho * B_hat - 1e-12))


class BacklogEstimator:
    """Per-round driver used by the simulator in estimated mode.

    The round stops when the next estimate drops below ``threshold``,
    when the frame had no collision, or after ``frames`` frames.
    """

    def __init__(self, table: CaptureTable, G: EnergyDistribution, M: int, alpha: float,
                 rho: float, frames: int, threshold: float = TERMINATION_THRESHOLD,
                 stop_on_no_collision: bool = True):
        self.betas = beta_table(table)
        self.G = G
        self.M = M
        self.alpha = alpha
        self.rho = rho
        self.frames = frames
        self.threshold = threshold
        self.stop_on_no_collision = stop_on_no_collision
        self.g_cond = np.zeros(frames + 1)
        for k in range(1, frames + 1):
            self.g_cond[k] = G.G_cond(k) if G.G_eps(k) > 0 else 0.0

    def first(self) -> float:
        return initial_backlog(self.M, self.alpha, self.G)

    def next(self, obs: FrameObservation) -> float:
        """Estimate for frame ``obs.k + 1``, or 0 when the round should end."""
        k = obs.k
        if k >= self.frames or (self.stop_on_no_collision and obs.N_C == 0):
            return 0.0
        bc = self.betas.beta_C[k - 1]
        b = update_backlog(obs, self.betas.beta_D[k - 1], 0.0 if math.isnan(bc) else bc,
                           self.g_cond[k])
        return b if b >= self.threshold else 0.0
