"""Capture probabilities under fading.

A tagged transmitter in frame ``k`` succeeds against ``j`` interferers when
``h >= gamma_th * (h_1 + ... + h_j)``.  Frame 1 gains follow the fading
model.  Sensors reaching frame ``k + 1`` failed in frame ``k``, so their gain
distribution is the frame-``k`` one conditioned on a failed capture.  That
conditional law is carried as a cloud of particles, with interferer gains
treated as independent draws from the same cloud.

With a Poisson(1/rho) number of interferers this yields the per-frame
capture probability ``p_marg[k]`` and slot efficiency ``p_slot[k]``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np
from scipy import stats

from .model import FadingModel, SystemConfig

MIN_ACCEPTANCE = 1e-4
_CHUNK = 1_000_000


class CaptureError(RuntimeError):
    pass


@dataclass
class GainParticles:
    frame: int
    samples: np.ndarray

    @property
    def sample_count(self) -> int:
        return int(self.samples.size)

    @classmethod
    def initial(cls, fading: FadingModel, n: int, rng: np.random.Generator) -> "GainParticles":
        return cls(frame=1, samples=fading.sample(rng, n))

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.samples[rng.integers(self.samples.size, size=size)]


def poisson_weight(rho: float, j: int) -> float:
    """Probability that ``j`` of the other backlogged sensors pick the same slot."""
    return math.exp(-1.0 / rho - j * math.log(rho) - math.lgamma(j + 1))


def poisson_weights(rho: float, j_max: int) -> np.ndarray:
    return stats.poisson.pmf(np.arange(j_max + 1), 1.0 / rho)


def truncation_point(rho: float, tail_mass: float) -> int:
    """Smallest ``J`` with ``Pr[Y > J] < tail_mass`` for ``Y ~ Poisson(1/rho)``."""
    lam = 1.0 / rho
    J = int(lam)
    while stats.poisson.sf(J, lam) >= tail_mass:
        J += 1
    return J


def capture_cond_exponential(gamma_th: float, j) -> np.ndarray:
    """Closed form ``(1 + gamma)^-j`` for unit-mean exponential gains."""
    j = np.asarray(j, dtype=float)
    if math.isinf(gamma_th):
        return np.where(j == 0, 1.0, 0.0)
    return (1.0 + gamma_th) ** (-j)


def _draw(source, rng, size):
    if isinstance(source, GainParticles):
        return source.draw(rng, size)
    return source.sample(rng, size)


def capture_curve(source: Union[FadingModel, GainParticles], gamma_th: float, j_max: int,
                  mc_samples: int, rng: np.random.Generator):
    """Monte-Carlo ``p(j)`` for ``j = 0..j_max`` with standard errors.

    Interferers are accumulated one at a time on the same draws, so the
    estimates are non-increasing in ``j`` by construction.
    """
    p = np.zeros(j_max + 1)
    p[0] = 1.0
    if math.isinf(gamma_th) or j_max == 0:
        return p, np.zeros(j_max + 1)
    hits = np.zeros(j_max + 1)
    done = 0
    while done < mc_samples:
        n = min(_CHUNK, mc_samples - done)
        h = _draw(source, rng, n)
        thresh = h / gamma_th
        s = np.zeros(n)
        for j in range(1, j_max + 1):
            s += _draw(source, rng, n)
            hits[j] += np.count_nonzero(s <= thresh)
        done += n
    p[1:] = hits[1:] / mc_samples
    se = np.sqrt(p * (1.0 - p) / mc_samples)
    se[0] = 0.0
    return p, se


def capture_cond(source: Union[FadingModel, GainParticles], gamma_th: float, j: int,
                 mc_samples: int, rng: Optional[np.random.Generator] = None):
    """Estimate ``Pr[h >= gamma_th * sum of j interferer gains]``; returns ``(p, se)``."""
    if j < 0:
        raise ValueError("interferer count must be non-negative")
    if j == 0:
        return 1.0, 0.0
    rng = rng if rng is not None else np.random.default_rng()
    p, se = capture_curve(source, gamma_th, j, mc_samples, rng)
    return float(p[j]), float(se[j])


def propagate_gain_particles(particles: GainParticles, rho: float, gamma_th: float,
                             rng: np.random.Generator, n_out: Optional[int] = None,
                             j_max: Optional[int] = None) -> GainParticles:
    """Gain law of sensors that failed in ``particles.frame``.

    Candidates are resampled from the cloud, each meets a Poisson(1/rho)
    number of interferers from the same cloud, and only the failures are
    kept.  Sampling continues until ``n_out`` particles are collected.
    """
    n_out = particles.sample_count if n_out is None else n_out
    lam = 1.0 / rho
    if math.isinf(gamma_th):
        # every collision fails whatever the gain: the law is unchanged
        return GainParticles(particles.frame + 1, particles.draw(rng, n_out))
    kept: List[np.ndarray] = []
    total = 0
    tried = 0
    batch = max(n_out, 10_000)
    while total < n_out:
        h = particles.draw(rng, batch)
        J = rng.poisson(lam, batch)
        if j_max is not None:
            np.minimum(J, j_max, out=J)
        owner = np.repeat(np.arange(batch), J)
        interf = np.bincount(owner, weights=particles.draw(rng, owner.size), minlength=batch)
        fail = (J > 0) & (h < gamma_th * interf)
        tried += batch
        acc = h[fail]
        kept.append(acc)
        total += acc.size
        if tried >= 20 * n_out and total / tried < MIN_ACCEPTANCE:
            raise CaptureError(
                f"frame {particles.frame}: failure rate {total / tried:.2e} is below "
                f"{MIN_ACCEPTANCE:g}; capture is almost certain and later frames are empty"
            )
    return GainParticles(particles.frame + 1, np.concatenate(kept)[:n_out])


@dataclass
class CaptureTable:
    """Per-frame capture statistics.

    Row ``k - 1`` holds frame ``k``: ``p_cond[k-1, j]`` is the success
    probability against ``j`` interferers, ``p_marg`` its Poisson average
    and ``p_slot`` the probability that a slot of that frame is successful.
    """

    p_cond: np.ndarray
    p_marg: np.ndarray
    p_slot: np.ndarray
    rho: float
    gamma_th: float
    J_max: int
    se_cond: Optional[np.ndarray] = None
    se_marg: Optional[np.ndarray] = None
    protocol: str = "DFA"
    key: str = ""
    flags: List[str] = field(default_factory=list)
    particle_means: Optional[np.ndarray] = None

    @property
    def frames(self) -> int:
        return int(self.p_marg.size)

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "p_cond": arr(self.p_cond), "p_marg": arr(self.p_marg), "p_slot": arr(self.p_slot),
            "rho": self.rho, "gamma_th": self.gamma_th, "J_max": self.J_max,
            "se_cond": arr(self.se_cond), "se_marg": arr(self.se_marg),
            "protocol": self.protocol, "key": self.key, "flags": list(self.flags),
            "particle_means": arr(self.particle_means),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CaptureTable":
        def arr(a):
            return None if a is None else np.asarray(a, dtype=float)

        return cls(
            p_cond=arr(d["p_cond"]), p_marg=arr(d["p_marg"]), p_slot=arr(d["p_slot"]),
            rho=d["rho"], gamma_th=d["gamma_th"], J_max=d["J_max"],
            se_cond=arr(d.get("se_cond")), se_marg=arr(d.get("se_marg")),
            protocol=d.get("protocol", "DFA"), key=d.get("key", ""),
            flags=list(d.get("flags", [])), particle_means=arr(d.get("particle_means")),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "CaptureTable":
        return cls.from_dict(json.loads(text))


def marginals(p_cond: np.ndarray, rho: float):
    """Poisson averages of a ``(frames, J_max + 1)`` array: ``(p_marg, p_slot)``."""
    w = poisson_weights(rho, p_cond.shape[1] - 1)
    p_marg = p_cond @ w
    return p_marg, p_marg / rho


def cache_key(config: SystemConfig, frames: int, fast: bool) -> str:
    tol = config.tolerances
    payload = json.dumps([
        config.fading.kind, config.fading.m, config.gamma_th if config.capture_enabled else "inf",
        config.rho, frames, tol.mc_samples, tol.particles, tol.poisson_tail_mass, tol.rng_seed,
        fast,
    ])
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


_CACHE: dict = {}


def build_capture_table(config: SystemConfig, fast: bool = True,
                        frames: Optional[int] = None, cache: bool = True) -> CaptureTable:
    """Capture table for the configured protocol.

    TDMA gets a single row with certain success.  FA gets one row, DFA one
    per frame up to ``F_eps``.  With ``fast`` and exponential fading the
    first row uses the closed form.  All other rows are Monte Carlo over
    particles, each frame on its own seeded substream.
    """
    tol = config.tolerances
    J = truncation_point(config.rho, tol.poisson_tail_mass)
    gamma = config.gamma_th
    if frames is None:
        frames = config.F_eps if config.protocol == "DFA" else 1
    key = cache_key(config, frames, fast) + config.protocol
    if cache and key in _CACHE:
        return _CACHE[key]
    table = _build(config, fast, frames, J, gamma, key)
    if cache and config.fading.kind != "custom":
        _CACHE[key] = table
    return table


def _build(config, fast, frames, J, gamma, key):
    tol = config.tolerances

    if config.protocol == "TDMA":
        p_cond = np.zeros((1, J + 1))
        p_cond[0, :] = 1.0
        return CaptureTable(p_cond=p_cond, p_marg=np.ones(1), p_slot=np.full(1, np.nan),
                            rho=config.rho, gamma_th=gamma, J_max=J, se_cond=np.zeros_like(p_cond),
                            se_marg=np.zeros(1), protocol="TDMA", key=key)

    p_cond = np.zeros((frames, J + 1))
    se_cond = np.zeros((frames, J + 1))
    means = np.zeros(frames)
    flags: List[str] = []
    streams = np.random.SeedSequence(tol.rng_seed).spawn(2 * frames)

    if not config.capture_enabled:
        p_cond[:, 0] = 1.0
        means[:] = 1.0
    else:
        particles = None
        for k in range(1, frames + 1):
            rng = np.random.default_rng(streams[2 * (k - 1)])
            if k == 1:
                particles = GainParticles.initial(config.fading, tol.particles, rng)
                if fast and config.fading.kind == "exponential":
                    p_cond[0] = capture_cond_exponential(gamma, np.arange(J + 1))
                else:
                    p_cond[0], se_cond[0] = capture_curve(config.fading, gamma, J,
                                                          tol.mc_samples, rng)
            else:
                prop_rng = np.random.default_rng(streams[2 * (k - 1) + 1])
                particles = propagate_gain_particles(particles, config.rho, gamma, prop_rng,
                                                     j_max=J)
                p_cond[k - 1], se_cond[k - 1] = capture_curve(particles, gamma, J,
                                                              tol.mc_samples, rng)
            means[k - 1] = particles.samples.mean()

    p_marg, p_slot = marginals(p_cond, config.rho)
    w = poisson_weights(config.rho, J)
    se_marg = np.sqrt((se_cond ** 2) @ (w ** 2))
    for k in np.flatnonzero(se_marg > tol.mc_max_se):
        flags.append(f"frame {k + 1}: capture standard error {se_marg[k]:.2e} above bound")
    return CaptureTable(p_cond=p_cond, p_marg=p_marg, p_slot=p_slot, rho=config.rho,
                        gamma_th=gamma, J_max=J, se_cond=se_cond, se_marg=se_marg,
                        protocol=config.protocol, key=key, flags=flags, particle_means=means)


def disabled_capture_table(rho: float, frames: int = 1, tail_mass: float = 1e-9) -> CaptureTable:
    """Classic collision channel: only lone transmitters succeed."""
    J = truncation_point(rho, tail_mass)
    p_cond = np.zeros((frames, J + 1))
    p_cond[:, 0] = 1.0
    p_marg, p_slot = marginals(p_cond, rho)
    return CaptureTable(p_cond=p_cond, p_marg=p_marg, p_slot=p_slot, rho=rho,
                        gamma_th=math.inf, J_max=J)

