"""Configuration and shared domain types.

Every engine (capture tables, the energy Markov chain, metrics, the
simulator) consumes a validated :class:`SystemConfig`.  Energy is measured
in integer multiples of the energy unit ``delta``; a transmission costs
``eps_units`` of them and the storage holds ``0..N``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

PROTOCOLS = ("TDMA", "FA", "DFA")
BACKLOG_MODES = ("known", "estimated")
INITIAL_PRESETS = ("empty", "full", "uniform")


class ConfigError(ValueError):
    """Raised when a configuration violates an invariant.

    ``param`` names the offending parameter.
    """

    def __init__(self, param: str, message: str):
        super().__init__(f"{param}: {message}")
        self.param = param


def db_to_linear(db: float) -> float:
    return math.inf if math.isinf(db) else 10.0 ** (db / 10.0)


def linear_to_db(lin: float) -> float:
    return math.inf if math.isinf(lin) else round(10.0 * math.log10(lin), 12)


@dataclass(frozen=True)
class EnergyConfig:
    delta: float
    N: int
    eps_units: int

    @property
    def F_eps(self) -> int:
        """Number of transmissions a full storage can pay for."""
        return self.N // self.eps_units

    @property
    def eps(self) -> float:
        return self.eps_units * self.delta

    @classmethod
    def from_eps(cls, eps: float, delta: float, F_eps: int) -> "EnergyConfig":
        units = round(eps / delta)
        return cls(delta=delta, N=units * F_eps, eps_units=units)

    def validate(self) -> None:
        if not (self.delta > 0):
            raise ConfigError("energy.delta", "must be positive")
        if int(self.eps_units) != self.eps_units or self.eps_units < 1:
            raise ConfigError("energy.eps_units", f"must be an integer >= 1, got {self.eps_units}")
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError("energy.N", f"must be a positive integer, got {self.N}")
        if self.N % self.eps_units:
            raise ConfigError(
                "energy.N", f"N={self.N} is not a multiple of eps_units={self.eps_units}"
            )


class HarvestModel:
    """Distribution of the energy harvested between two rounds, in delta units.

    Either geometric (``q_i = xi (1 - xi)^i``) or an explicit finite pmf.
    Tails are computed exactly so that saturation at the storage capacity
    never loses mass.
    """

    def __init__(self, pmf: Optional[np.ndarray] = None, xi: Optional[float] = None,
                 mu_H: Optional[float] = None):
        if (pmf is None) == (xi is None):
            raise ValueError("give exactly one of pmf or xi")
        self.xi = xi
        self.mu_H = mu_H
        self._pmf = None if pmf is None else np.asarray(pmf, dtype=float)

    @classmethod
    def geometric(cls, mu_H: float, eps_units: int) -> "HarvestModel":
        """Geometric harvest with mean ``mu_H`` transmissions' worth of energy.

        With energy unit delta and transmission cost eps, the success
        parameter is ``delta / (delta + mu_H * eps) = 1 / (1 + mu_H * eps_units)``.
        """
        if not (mu_H > 0):
            raise ConfigError("harvest.mu_H", "must be positive")
        return cls(xi=1.0 / (1.0 + mu_H * eps_units), mu_H=mu_H)

    @classmethod
    def from_pmf(cls, q) -> "HarvestModel":
        return cls(pmf=np.asarray(q, dtype=float))

    @property
    def kind(self) -> str:
        return "geometric" if self.xi is not None else "pmf"

    def pmf(self, n: int) -> np.ndarray:
        """``q_0 .. q_{n-1}`` (zero-padded for finite pmfs)."""
        if self.xi is not None:
            i = np.arange(n)
            return self.xi * (1.0 - self.xi) ** i
        out = np.zeros(n)
        m = min(n, self._pmf.size)
        out[:m] = self._pmf[:m]
        return out

    def tail(self, m: int) -> float:
        """``Pr[E_H >= m]``."""
        if m <= 0:
            return 1.0
        if self.xi is not None:
            return (1.0 - self.xi) ** m
        return float(max(0.0, 1.0 - self._pmf[:m].sum()))

    def mean(self) -> float:
        if self.xi is not None:
            return (1.0 - self.xi) / self.xi
        return float(np.dot(np.arange(self._pmf.size), self._pmf))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.xi is not None:
            return rng.geometric(self.xi, size=size) - 1
        return rng.choice(self._pmf.size, size=size, p=self._pmf)

    def validate(self) -> None:
        q = self.pmf(2)
        if self._pmf is not None:
            if np.any(self._pmf < 0):
                raise ConfigError("harvest.q", "negative probability")
            if abs(self._pmf.sum() - 1.0) > 1e-12:
                raise ConfigError("harvest.q", f"sums to {self._pmf.sum()!r}, not 1")
        if not q[0] > 0:
            raise ConfigError("harvest.q_0", "must be > 0 for an ergodic energy chain")
        if not q[1] > 0:
            raise ConfigError("harvest.q_1", "must be > 0 for an ergodic energy chain")

    def normalized(self) -> "HarvestModel":
        if self._pmf is None:
            return self
        nz = np.flatnonzero(self._pmf)
        p = self._pmf[: nz[-1] + 1] if nz.size else self._pmf
        return HarvestModel.from_pmf(p / p.sum())

    def to_dict(self) -> dict:
        if self.xi is not None:
            return {"kind": "geometric", "mu_H": self.mu_H, "xi": self.xi}
        return {"kind": "pmf", "q": self._pmf.tolist()}

    def __eq__(self, other):
        if not isinstance(other, HarvestModel):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self):
        if self.xi is not None:
            return f"HarvestModel.geometric(mu_H={self.mu_H}, xi={self.xi:.6g})"
        return f"HarvestModel.from_pmf({self._pmf.tolist()})"


@dataclass(frozen=True)
class FadingModel:
    """Channel power gain distribution, unit mean.

    ``kind`` is ``"exponential"`` (Rayleigh fading), ``"nakagami"`` (gamma
    distributed power with shape ``m``) or ``"custom"`` with a ``sampler``
    callable ``(rng, size) -> array``; custom samples are rescaled by their
    empirical mean only if ``normalize`` is set.
    """

    kind: str = "exponential"
    m: float = 1.0
    sampler: Optional[Callable] = field(default=None, compare=False)
    normalize: bool = False

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "exponential":
            return rng.standard_exponential(size)
        if self.kind == "nakagami":
            return rng.gamma(self.m, 1.0 / self.m, size)
        h = np.asarray(self.sampler(rng, size), dtype=float)
        if self.normalize:
            h = h / h.mean()
        if np.any(h <= 0):
            raise ValueError("fading sampler produced non-positive gains")
        return h

    def validate(self) -> None:
        if self.kind not in ("exponential", "nakagami", "custom"):
            raise ConfigError("fading.kind", f"unknown kind {self.kind!r}")
        if self.kind == "nakagami" and not self.m > 0:
            raise ConfigError("fading.m", "must be positive")
        if self.kind == "custom" and self.sampler is None:
            raise ConfigError("fading.sampler", "custom fading needs a sampler")

    def to_dict(self) -> dict:
        if self.kind == "custom":
            raise TypeError("custom fading samplers are not serializable")
        d = {"kind": self.kind}
        if self.kind == "nakagami":
            d["m"] = self.m
        return d


@dataclass(frozen=True)
class NumericTolerances:
    poisson_tail_mass: float = 1e-9
    mc_samples: int = 200_000
    particles: int = 200_000
    stationary_residual: float = 1e-12
    mc_max_se: float = 5e-3
    rng_seed: int = 12345

    def validate(self) -> None:
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not v > 0:
                raise ConfigError(f"tolerances.{f.name}", "must be strictly positive")
        if self.poisson_tail_mass >= 1e-6:
            raise ConfigError("tolerances.poisson_tail_mass", "must be < 1e-6")


@dataclass(frozen=True)
class SystemConfig:
    """One scenario.  ``gamma_th`` is linear; use :meth:`from_dict` for dB input."""

    M: int
    alpha: float
    gamma_th: float
    rho: float
    energy: EnergyConfig
    harvest: HarvestModel
    fading: FadingModel = FadingModel()
    protocol: str = "DFA"
    backlog_mode: str = "known"
    initial_energy: Any = "uniform"
    tolerances: NumericTolerances = NumericTolerances()

    @property
    def gamma_th_db(self) -> float:
        return linear_to_db(self.gamma_th)

    @property
    def F_eps(self) -> int:
        return self.energy.F_eps

    @property
    def capture_enabled(self) -> bool:
        return not math.isinf(self.gamma_th)

    def replace(self, **changes) -> "SystemConfig":
        """Copy with changes; ``mu_H`` and ``gamma_th_db`` are accepted as shortcuts."""
        if "mu_H" in changes:
            changes["harvest"] = HarvestModel.geometric(changes.pop("mu_H"), self.energy.eps_units)
        if "gamma_th_db" in changes:
            changes["gamma_th"] = db_to_linear(changes.pop("gamma_th_db"))
        return dataclasses.replace(self, **changes)

    def initial_pmf(self) -> np.ndarray:
        """Energy pmf at the start of the first round."""
        N = self.energy.N
        p = self.initial_energy
        if isinstance(p, str):
            out = np.zeros(N + 1)
            if p == "empty":
                out[0] = 1.0
            elif p == "full":
                out[N] = 1.0
            elif p == "uniform":
                out[:] = 1.0 / (N + 1)
            return out
        return np.asarray(p, dtype=float)

    def to_dict(self) -> dict:
        init = self.initial_energy
        if not isinstance(init, str):
            init = [float(x) for x in np.asarray(init)]
        return {
            "M": self.M,
            "alpha": self.alpha,
            "gamma_th_db": self.gamma_th_db,
            "rho": self.rho,
            "energy": {"delta": self.energy.delta, "N": self.energy.N,
                       "eps_units": self.energy.eps_units},
            "harvest": self.harvest.to_dict(),
            "fading": self.fading.to_dict(),
            "protocol": self.protocol,
            "backlog_mode": self.backlog_mode,
            "initial_energy": init,
            "tolerances": dataclasses.asdict(self.tolerances),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        e = d["energy"]
        if "eps_units" in e:
            energy = EnergyConfig(delta=float(e["delta"]), N=e["N"], eps_units=e["eps_units"])
        else:
            energy = EnergyConfig.from_eps(float(e.get("eps", 1.0)), float(e["delta"]), e["F_eps"])
        h = d["harvest"]
        if h["kind"] == "geometric":
            harvest = HarvestModel.geometric(float(h["mu_H"]), energy.eps_units)
        elif h["kind"] == "pmf":
            harvest = HarvestModel.from_pmf(h["q"])
        else:
            raise ConfigError("harvest.kind", f"unknown kind {h['kind']!r}")
        f = d.get("fading", {"kind": "exponential"})
        fading = FadingModel(kind=f["kind"], m=float(f.get("m", 1.0)))
        if "gamma_th_db" in d:
            gamma = db_to_linear(float(d["gamma_th_db"]))
        else:
            gamma = float(d["gamma_th"])
        return cls(
            M=d["M"],
            alpha=float(d["alpha"]),
            gamma_th=gamma,
            rho=float(d["rho"]),
            energy=energy,
            harvest=harvest,
            fading=fading,
            protocol=d.get("protocol", "DFA"),
            backlog_mode=d.get("backlog_mode", "known"),
            initial_energy=d.get("initial_energy", "uniform"),
            tolerances=NumericTolerances(**d.get("tolerances", {})),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SystemConfig":
        return validate(cls.from_dict(json.loads(text)))


def validate(config: SystemConfig) -> SystemConfig:
    """Check every invariant and return a normalized copy.

    Raises :class:`ConfigError` naming the first violated parameter.
    """
    if int(config.M) != config.M or config.M < 1:
        raise ConfigError("M", f"must be an integer >= 1, got {config.M}")
    if not (0.0 <= config.alpha <= 1.0):
        raise ConfigError("alpha", f"must lie in [0, 1], got {config.alpha}")
    if not (config.gamma_th > 1.0):
        raise ConfigError("gamma_th", f"must exceed 1 (0 dB) in linear scale, got {config.gamma_th}")
    if not (config.rho > 0) or math.isinf(config.rho):
        raise ConfigError("rho", f"must be positive and finite, got {config.rho}")
    if config.protocol not in PROTOCOLS:
        raise ConfigError("protocol", f"must be one of {PROTOCOLS}, got {config.protocol!r}")
    if config.backlog_mode not in BACKLOG_MODES:
        raise ConfigError("backlog_mode", f"must be one of {BACKLOG_MODES}")
    config.energy.validate()
    config.harvest.validate()
    config.fading.validate()
    config.tolerances.validate()
    init = config.initial_energy
    if isinstance(init, str):
        if init not in INITIAL_PRESETS:
            raise ConfigError("initial_energy", f"preset must be one of {INITIAL_PRESETS}")
    else:
        p = np.asarray(init, dtype=float)
        if p.shape != (config.energy.N + 1,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-10:
            raise ConfigError("initial_energy", "must be a pmf over 0..N")
    return dataclasses.replace(config, M=int(config.M), harvest=config.harvest.normalized())


def evaluation_config(mu_H: float = 0.15, rho: float = 1.0, protocol: str = "DFA",
                 gamma_th_db: float = 3.0, **overrides) -> SystemConfig:
    """The evaluation scenario: M=400, alpha=0.3, eps=1, delta=1/50, F_eps=10."""
    energy = EnergyConfig.from_eps(1.0, 1.0 / 50, 10)
    cfg = SystemConfig(
        M=400,
        alpha=0.3,
        gamma_th=db_to_linear(gamma_th_db),
        rho=rho,
        energy=energy,
        harvest=HarvestModel.geometric(mu_H, energy.eps_units),
        protocol=protocol,
    )
    return validate(dataclasses.replace(cfg, **overrides))
