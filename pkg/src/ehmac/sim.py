"""Round-by-round simulation of M energy-harvesting sensors.

Unlike the analysis, nothing is approximated here.  Backlogs are finite,
slot choices are uniform over the announced frame, and each gain is drawn
once per round and kept for all of its frames.  Collisions therefore
correlate gains across frames exactly as they would in a real network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .capture import CaptureTable, build_capture_table
from .estimator import BacklogEstimator, FrameObservation, frame_length
from .markov import EnergyDistribution, build_transition_matrix, steady_state
from .model import SystemConfig

DEFAULT_WARMUP = 2000
N_BATCHES = 50


class SimulationError(RuntimeError):
    pass


@dataclass
class Violations:
    multiple_captures: int = 0
    energy: int = 0
    backlog: int = 0
    slots_resolved: int = 0

    @property
    def total(self) -> int:
        return self.multiple_captures + self.energy + self.backlog


@dataclass
class IrTrace:
    n: int
    frames: List[FrameObservation] = field(default_factory=list)
    backlog: List[int] = field(default_factory=list)
    backlog_hat: List[float] = field(default_factory=list)
    had_measure: int = 0
    delivered: int = 0
    shortage: int = 0
    successes: int = 0

    @property
    def slots(self) -> int:
        return sum(f.L for f in self.frames)


@dataclass
class SimReport:
    protocol: str
    backlog_mode: str
    p_d: float
    p_t: float
    se_p_d: float
    se_p_t: float
    energy: EnergyDistribution
    measures: int
    delivered: int
    slots: int
    successes: int
    n_irs: int
    warmup: int
    seed: int
    replicas: int = 1
    violations: Violations = field(default_factory=Violations)
    config: Optional[dict] = None


def resolve_slot(gains, gamma_th: float):
    """Outcome of one slot: ``("empty", None)``, ``("collided", None)`` or ``("success", i)``."""
    g = np.asarray(gains, dtype=float)
    if g.size == 0:
        return ("empty", None)
    if g.size == 1:
        return ("success", 0)
    interf = g.sum() - g
    ok = np.flatnonzero(g >= gamma_th * interf)
    assert ok.size <= 1, "more than one capture in a slot"
    return ("success", int(ok[0])) if ok.size else ("collided", None)


def harvest_step(energy: np.ndarray, harvest, N: int, rng: np.random.Generator) -> np.ndarray:
    np.minimum(energy + harvest.sample(rng, energy.size), N, out=energy)
    return energy


def _frame(tx: np.ndarray, L: int, h: np.ndarray, gamma: float, rng, viol: Violations):
    """Resolve one frame for transmitters ``tx``; returns (success mask, N_D, N_C, N_E)."""
    slot = rng.integers(L, size=tx.size)
    count = np.bincount(slot, minlength=L)
    g = h[tx]
    interf = np.bincount(slot, weights=g, minlength=L)[slot] - g
    lone = count[slot] == 1
    if math.isinf(gamma):
        win = lone
    else:
        win = lone | (g >= gamma * interf)
    per_slot = np.bincount(slot[win], minlength=L)
    viol.multiple_captures += int(np.count_nonzero(per_slot > 1))
    viol.slots_resolved += L
    n_d = int(np.count_nonzero(per_slot))
    n_e = int(np.count_nonzero(count == 0))
    return win, n_d, L - n_d - n_e, n_e


def run_ir(energy: np.ndarray, config: SystemConfig, rng: np.random.Generator,
           estimator: Optional[BacklogEstimator] = None, n: int = 0,
           viol: Optional[Violations] = None, attempts: Optional[np.ndarray] = None) -> IrTrace:
    """Play one round on ``energy`` (modified in place).

    Measures and gains are drawn here.  ``estimator`` switches frame sizing
    from the true backlog to the estimated one.  ``attempts``, if given,
    receives the number of transmissions of every sensor.
    """
    viol = viol if viol is not None else Violations()
    e = config.energy.eps_units
    M = config.M
    trace = IrTrace(n)
    has = rng.random(M) < config.alpha
    h = config.fading.sample(rng, M)
    trace.had_measure = int(has.sum())
    tx = np.flatnonzero(has & (energy >= e))
    trace.shortage = trace.had_measure - tx.size

    if config.protocol == "TDMA":
        energy[tx] -= e
        if attempts is not None:
            attempts[tx] += 1
        trace.frames.append(FrameObservation(1, tx.size, 0, M - tx.size))
        trace.backlog.append(tx.size)
        trace.delivered = trace.successes = tx.size
        viol.slots_resolved += M
        return trace

    max_frames = config.F_eps if config.protocol == "DFA" else 1
    b_hat = estimator.first() if estimator is not None else None
    k = 1
    while True:
        B = tx.size
        L = math.ceil(config.rho * B - 1e-12) if estimator is None else frame_length(b_hat, config.rho)
        if L == 0:
            break
        trace.backlog.append(B)
        if b_hat is not None:
            trace.backlog_hat.append(b_hat)
        if B:
            energy[tx] -= e
            if attempts is not None:
                attempts[tx] += 1
            win, n_d, n_c, n_e = _frame(tx, L, h, config.gamma_th, rng, viol)
        else:
            win = np.zeros(0, dtype=bool)
            n_d, n_c, n_e = 0, 0, L
            viol.slots_resolved += L
        obs = FrameObservation(k, n_d, n_c, n_e)
        trace.frames.append(obs)
        trace.delivered += int(win.sum())
        trace.successes += n_d
        if k >= max_frames:
            break
        losers = tx[~win]
        tx = losers[energy[losers] >= e]
        if estimator is None:
            if tx.size == 0:
                break
        else:
            b_hat = estimator.next(obs)
            if b_hat <= 0:
                break
        k += 1
    return trace


def _check_round(config, before, after, att, tr: IrTrace, viol: Violations) -> None:
    e = config.energy.eps_units
    viol.energy += int(np.count_nonzero(after < 0))
    viol.energy += int(np.count_nonzero(att > config.F_eps))
    viol.energy += int(np.count_nonzero(after != before - e * att))
    # a sensor reaches frame k+1 only after failing in frame k
    for k in range(1, len(tr.backlog)):
        if tr.backlog[k] > tr.backlog[k - 1] - tr.frames[k - 1].N_D:
            viol.backlog += 1


def _batch_ratio_se(num: np.ndarray, den: np.ndarray, n_batches: int = N_BATCHES) -> float:
    if num.size < 2 * n_batches:
        n_batches = max(2, num.size // 2)
    if num.size < 4:
        return math.nan
    bn = np.array([c.sum() for c in np.array_split(num, n_batches)], dtype=float)
    bd = np.array([c.sum() for c in np.array_split(den, n_batches)], dtype=float)
    keep = bd > 0
    if keep.sum() < 2:
        return math.nan
    r = bn[keep] / bd[keep]
    return float(r.std(ddof=1) / math.sqrt(r.size))


def estimator_for(config: SystemConfig, table: Optional[CaptureTable] = None,
                  G: Optional[EnergyDistribution] = None, **kw) -> BacklogEstimator:
    """Estimator fed with the analytical capture table and stationary energy law."""
    if table is None:
        table = build_capture_table(config)
    if G is None:
        G = steady_state(build_transition_matrix(config, table))
    frames = config.F_eps if config.protocol == "DFA" else 1
    return BacklogEstimator(table, G, config.M, config.alpha, config.rho, frames, **kw)


def _initial_energy(config: SystemConfig, rng) -> np.ndarray:
    p = config.initial_pmf()
    return rng.choice(p.size, size=config.M, p=p).astype(np.int64)


def run_simulation(config: SystemConfig, n_irs: int, warmup: int = DEFAULT_WARMUP,
                   seed: int = 0, estimator: Optional[BacklogEstimator] = None,
                   check_invariants: bool = False, keep_traces: bool = False):
    """Simulate ``n_irs`` rounds and measure the last ``n_irs - warmup``.

    In estimated backlog mode an estimator is built from the analysis
    unless one is passed in.  With ``keep_traces`` the measured
    :class:`IrTrace` list is returned alongside the report.
    """
    if not n_irs > warmup >= 0:
        raise ValueError("need n_irs > warmup >= 0")
    if config.backlog_mode == "estimated" and config.protocol != "TDMA" and estimator is None:
        estimator = estimator_for(config)
    if config.backlog_mode == "known" or config.protocol == "TDMA":
        estimator = None
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    N = config.energy.N
    e = config.energy.eps_units
    energy = _initial_energy(config, rng)
    viol = Violations()
    n_meas = n_irs - warmup
    meas = np.zeros(n_meas, dtype=np.int64)
    deliv = np.zeros(n_meas, dtype=np.int64)
    slots = np.zeros(n_meas, dtype=np.int64)
    succ = np.zeros(n_meas, dtype=np.int64)
    hist = np.zeros(N + 1, dtype=np.int64)
    traces = []
    for n in range(n_irs):
        if n >= warmup:
            hist += np.bincount(energy, minlength=N + 1)
        if check_invariants:
            before = energy.copy()
            att = np.zeros(config.M, dtype=np.int64)
            tr = run_ir(energy, config, rng, estimator, n=n + 1, viol=viol, attempts=att)
            _check_round(config, before, energy, att, tr, viol)
            draw = config.harvest.sample(rng, config.M)
            np.minimum(energy + draw, N, out=energy)
            expected = np.minimum(before - e * att + draw, N)
            viol.energy += int(np.count_nonzero(energy != expected))
        else:
            tr = run_ir(energy, config, rng, estimator, n=n + 1, viol=viol)
            harvest_step(energy, config.harvest, N, rng)
        if n >= warmup:
            i = n - warmup
            meas[i] = tr.had_measure
            deliv[i] = tr.delivered
            slots[i] = tr.slots
            succ[i] = tr.successes
            if keep_traces:
                traces.append(tr)
    report = _report(config, meas, deliv, slots, succ, hist, n_irs, warmup, seed, viol)
    return (report, traces) if keep_traces else report


def _report(config, meas, deliv, slots, succ, hist, n_irs, warmup, seed, viol, replicas=1):
    if slots.sum() == 0:
        raise SimulationError("no slots allocated during the measurement window")
    p_d = deliv.sum() / meas.sum() if meas.sum() else math.nan
    p_t = succ.sum() / slots.sum()
    energy = EnergyDistribution(hist / hist.sum(), config.energy.eps_units, tag="empirical")
    return SimReport(
        protocol=config.protocol, backlog_mode=config.backlog_mode,
        p_d=float(p_d), p_t=float(p_t),
        se_p_d=_batch_ratio_se(deliv, meas), se_p_t=_batch_ratio_se(succ, slots),
        energy=energy, measures=int(meas.sum()), delivered=int(deliv.sum()),
        slots=int(slots.sum()), successes=int(succ.sum()), n_irs=n_irs, warmup=warmup,
        seed=seed, replicas=replicas, violations=viol,
        config=_snapshot(config),
    )


def _snapshot(config):
    try:
        return config.to_dict()
    except TypeError:
        return None


def merge_reports(reports: List[SimReport]) -> SimReport:
    """Pool independent replicas; standard errors come from the replica spread."""
    if len(reports) == 1:
        return reports[0]
    r0 = reports[0]
    meas = sum(r.measures for r in reports)
    deliv = sum(r.delivered for r in reports)
    slots = sum(r.slots for r in reports)
    succ = sum(r.successes for r in reports)
    pd = np.array([r.p_d for r in reports])
    pt = np.array([r.p_t for r in reports])
    n = len(reports)
    pmf = np.mean([r.energy.pmf for r in reports], axis=0)
    viol = Violations(sum(r.violations.multiple_captures for r in reports),
                      sum(r.violations.energy for r in reports),
                      sum(r.violations.backlog for r in reports),
                      sum(r.violations.slots_resolved for r in reports))
    return SimReport(
        protocol=r0.protocol, backlog_mode=r0.backlog_mode,
        p_d=deliv / meas if meas else math.nan, p_t=succ / slots,
        se_p_d=float(pd.std(ddof=1) / math.sqrt(n)), se_p_t=float(pt.std(ddof=1) / math.sqrt(n)),
        energy=EnergyDistribution(pmf, r0.energy.eps_units, tag="empirical"),
        measures=meas, delivered=deliv, slots=slots, successes=succ,
        n_irs=r0.n_irs, warmup=r0.warmup, seed=r0.seed, replicas=n, violations=viol,
        config=r0.config,
    )


def run_replicas(config: SystemConfig, n_irs: int, warmup: int = DEFAULT_WARMUP,
                 seed: int = 0, replicas: int = 1) -> SimReport:
    """Independent replicas on substreams spawned from ``seed``."""
    estimator = None
    if config.backlog_mode == "estimated" and config.protocol != "TDMA":
        estimator = estimator_for(config)
    children = np.random.SeedSequence(seed).spawn(replicas)
    reports = []
    for child in children:
        sub = int(child.generate_state(1, dtype=np.uint64)[0])
        reports.append(run_simulation(config, n_irs, warmup, sub, estimator=estimator))
    rep = merge_reports(reports)
    rep.seed = seed
    return rep
