"""Energy-storage Markov chain of a single sensor.

States are idle ``I_j`` (``j = 0..N`` stored units) and active ``A_j^k``
(frame ``k``, ``j >= eps_units`` units).  Transitions are event driven: a
round boundary moves an idle sensor through harvesting, and each frame
resolves one transmission of an active sensor.

TDMA and FA only use the frame-1 active states and send the sensor back to
idle after its single attempt, so their matrices do not depend on capture.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .capture import CaptureTable, build_capture_table
from .model import SystemConfig

DENSE_LIMIT = 2000


class MarkovError(RuntimeError):
    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class StateIndex:
    N: int
    eps_units: int
    frames: int

    @property
    def n_idle(self) -> int:
        return self.N + 1

    @property
    def width(self) -> int:
        return self.N - self.eps_units + 1

    @property
    def size(self) -> int:
        return self.n_idle + self.frames * self.width

    def idle(self, j: int) -> int:
        if not 0 <= j <= self.N:
            raise IndexError(f"no idle state I_{j}")
        return j

    def active(self, j: int, k: int) -> int:
        if not (self.eps_units <= j <= self.N and 1 <= k <= self.frames):
            raise IndexError(f"no active state A_{j}^{k}")
        return self.n_idle + (k - 1) * self.width + (j - self.eps_units)

    def decode(self, i: int):
        """``("I", j, 0)`` or ``("A", j, k)`` for a dense index."""
        if not 0 <= i < self.size:
            raise IndexError(i)
        if i < self.n_idle:
            return ("I", i, 0)
        r = i - self.n_idle
        return ("A", self.eps_units + r % self.width, r // self.width + 1)

    def label(self, i: int) -> str:
        kind, j, k = self.decode(i)
        return f"I_{j}" if kind == "I" else f"A_{j}^{k}"

    def labels(self):
        return [self.label(i) for i in range(self.size)]

    def begin_slots(self) -> np.ndarray:
        """Indices that can hold mass at the start of a round, ordered by energy."""
        e = self.eps_units
        return np.concatenate([np.arange(e), [self.active(j, 1) for j in range(e, self.N + 1)]])


@dataclass
class TransitionMatrix:
    P: sp.csr_matrix
    index: StateIndex
    protocol: str
    alpha: float

    def dense(self) -> np.ndarray:
        return self.P.toarray()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["from", "from_label", "to", "to_label", "p"])
        coo = self.P.tocoo()
        order = np.lexsort((coo.col, coo.row))
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            w.writerow([r, self.index.label(r), c, self.index.label(c), repr(float(v))])
        return buf.getvalue()


@dataclass
class EnergyDistribution:
    """Energy pmf over ``0..N`` units at the start of a round."""

    pmf: np.ndarray
    eps_units: int
    tag: str = "steady-state"

    @property
    def N(self) -> int:
        return self.pmf.size - 1

    @property
    def ccdf(self) -> np.ndarray:
        """``G[x] = Pr[E >= x]`` for ``x = 0..N``."""
        return np.cumsum(self.pmf[::-1])[::-1]

    def G(self, x: int) -> float:
        if x <= 0:
            return 1.0
        if x > self.N:
            return 0.0
        return float(self.pmf[x:].sum())

    def G_eps(self, k: int) -> float:
        """Probability of affording ``k`` transmissions."""
        return self.G(k * self.eps_units)

    def G_cond(self, k: int) -> float:
        """``Pr[E >= (k+1) eps | E >= k eps]``."""
        den = self.G_eps(k)
        if den <= 0:
            raise ZeroDivisionError(f"G({k} eps) = 0: conditional ccdf undefined")
        return self.G_eps(k + 1) / den

    def to_dict(self) -> dict:
        return {"tag": self.tag, "eps_units": self.eps_units, "pmf": self.pmf.tolist(),
                "ccdf": self.ccdf.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def build_transition_matrix(config: SystemConfig,
                            capture_table: Optional[CaptureTable] = None) -> TransitionMatrix:
    """Row-stochastic matrix of the single-sensor chain.

    From ``I_j`` the harvest lifts the level to ``l``: ``I_l`` below the
    transmission cost, ``A_l^1`` otherwise, with the whole tail beyond the
    capacity landing on ``A_N^1``.  From ``A_j^1`` the sensor goes back to
    ``I_j`` without a new measure.  With a measure it pays ``eps_units``
    and either succeeds (``I_{j-eps}``) or collides, retrying in
    ``A_{j-eps}^{k+1}`` only under DFA and only while it can still pay.
    """
    N = config.energy.N
    e = config.energy.eps_units
    dfa = config.protocol == "DFA"
    frames = config.F_eps if dfa else 1
    if dfa:
        if capture_table is None:
            capture_table = build_capture_table(config)
        if capture_table.frames != frames:
            raise ValueError(
                f"capture table has {capture_table.frames} frames, chain needs F_eps={frames}"
            )
        pc = np.clip(capture_table.p_marg, 0.0, 1.0)
    idx = StateIndex(N, e, frames)
    a = config.alpha
    q = config.harvest.pmf(N + 1)
    rows, cols, vals = [], [], []

    # harvesting rows
    for j in range(N + 1):
        l = np.arange(j, N)
        dest = np.where(l < e, l, idx.n_idle + (l - e))
        rows.append(np.full(l.size + 1, j))
        cols.append(np.append(dest, idx.active(N, 1)))
        vals.append(np.append(q[: N - j], config.harvest.tail(N - j)))

    # communication rows
    r, c, v = [], [], []
    for k in range(1, frames + 1):
        for j in range(e, N + 1):
            s = idx.active(j, k)
            go = a if k == 1 else 1.0
            if k == 1:
                r.append(s); c.append(j); v.append(1.0 - a)
            if not dfa:
                r.append(s); c.append(j - e); v.append(go)
                continue
            p = pc[k - 1]
            r.append(s); c.append(j - e); v.append(go * p)
            if j >= 2 * e and k < frames:
                r.append(s); c.append(idx.active(j - e, k + 1)); v.append(go * (1.0 - p))
            else:
                r.append(s); c.append(j - e); v.append(go * (1.0 - p))
    rows.append(np.asarray(r)); cols.append(np.asarray(c)); vals.append(np.asarray(v))

    P = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(idx.size, idx.size),
    ).tocsr()
    P.sum_duplicates()
    P.eliminate_zeros()
    return TransitionMatrix(P=P, index=idx, protocol=config.protocol, alpha=a)


def _residual(phi, P) -> float:
    return float(np.max(np.abs(P.T @ phi - phi)))


def stationary_distribution(tm: TransitionMatrix, method: str = "auto",
                            residual: float = 1e-12, max_iter: int = 1_000_000,
                            start: Optional[np.ndarray] = None) -> np.ndarray:
    """Stationary vector ``phi`` with ``phi P = phi``.

    ``"direct"`` replaces one balance equation by the normalization (dense
    LU for small chains, sparse LU above ``DENSE_LIMIT`` states);
    ``"power"`` iterates ``phi <- phi P`` from ``start``.
    """
    P = tm.P
    n = P.shape[0]
    if method == "auto":
        method = "direct"
    if method == "direct":
        A = (P.T - sp.identity(n, format="csr")).tolil()
        A[0, :] = np.ones(n)
        b = np.zeros(n)
        b[0] = 1.0
        if n <= DENSE_LIMIT:
            phi = scipy.linalg.solve(A.toarray(), b)
        else:
            phi = spla.spsolve(A.tocsc(), b)
        phi = np.clip(phi, 0.0, None)
        phi /= phi.sum()
        res = _residual(phi, P)
        if res > residual:
            # a few smoothing steps wash out solver round-off
            for _ in range(50):
                phi = P.T @ phi
                phi /= phi.sum()
                res = _residual(phi, P)
                if res <= residual:
                    break
    elif method == "power":
        phi = np.full(n, 1.0 / n) if start is None else np.asarray(start, dtype=float)
        PT = P.T.tocsr()
        res = np.inf
        for it in range(max_iter):
            nxt = PT @ phi
            # lazy step keeps convergence for chains with periodic parts
            nxt = 0.5 * (nxt + phi)
            nxt /= nxt.sum()
            if it % 16 == 0:
                res = _residual(nxt, P)
                if res <= residual:
                    phi = nxt
                    break
            phi = nxt
        res = _residual(phi, P)
    else:
        raise ValueError(f"unknown method {method!r}")
    if res > residual:
        raise MarkovError(f"stationary solve did not converge (residual {res:.3e})", res)
    return phi


def begin_ir_distribution(phi: np.ndarray, tm: TransitionMatrix) -> np.ndarray:
    """State distribution right after the harvest at the start of a round."""
    idx = tm.index
    minus = np.zeros_like(phi)
    idle = phi[: idx.n_idle]
    mass = idle.sum()
    if mass <= 0:
        raise MarkovError("no stationary mass in idle states")
    minus[: idx.n_idle] = idle / mass
    plus = tm.P.T @ minus
    allowed = np.zeros(idx.size, dtype=bool)
    allowed[idx.begin_slots()] = True
    stray = np.abs(plus[~allowed]).max(initial=0.0)
    assert stray < 1e-14, f"begin-of-round mass outside I_j (j<eps) / A_j^1: {stray}"
    return plus


def energy_pmf(plus: np.ndarray, tm: TransitionMatrix, tag: str = "steady-state") -> EnergyDistribution:
    """Map begin-of-round states to stored energy levels."""
    idx = tm.index
    return EnergyDistribution(pmf=plus[idx.begin_slots()].copy(), eps_units=idx.eps_units, tag=tag)


def steady_state(tm: TransitionMatrix, **kw) -> EnergyDistribution:
    phi = stationary_distribution(tm, **kw)
    return energy_pmf(begin_ir_distribution(phi, tm), tm)


def _split(tm: TransitionMatrix):
    n_idle = tm.index.n_idle
    P = tm.P
    return P[:n_idle, :], P[n_idle:, :]


def advance_ir(begin: np.ndarray, tm: TransitionMatrix) -> np.ndarray:
    """Begin-of-round state vector of the following round."""
    idx = tm.index
    n_idle = idx.n_idle
    P_idle, P_act = _split(tm)
    end = begin[:n_idle].copy()
    act = begin[n_idle:]
    for _ in range(idx.frames + 1):
        if not act.any():
            break
        nxt = P_act.T @ act
        end += nxt[:n_idle]
        act = nxt[n_idle:]
    return P_idle.T @ end


def embed(pmf: np.ndarray, tm: TransitionMatrix) -> np.ndarray:
    v = np.zeros(tm.index.size)
    v[tm.index.begin_slots()] = pmf
    return v


def transient_evolution(p_E1, n: int, tm: TransitionMatrix) -> EnergyDistribution:
    """Energy pmf at the start of round ``n`` given the pmf at round 1."""
    if n < 1:
        raise ValueError("round index starts at 1")
    pmf = p_E1.pmf if isinstance(p_E1, EnergyDistribution) else np.asarray(p_E1, dtype=float)
    v = embed(pmf, tm)
    for _ in range(n - 1):
        v = advance_ir(v, tm)
    return energy_pmf(v, tm, tag=f"IR {n}")


def ir_kernel(tm: TransitionMatrix) -> np.ndarray:
    """Round-to-round energy kernel ``K[i, l] = Pr[E(n+1) = l | E(n) = i]``."""
    idx = tm.index
    slots = idx.begin_slots()
    B = sp.csr_matrix((np.ones(slots.size), (np.arange(slots.size), slots)),
                      shape=(slots.size, idx.size))
    P_idle, P_act = _split(tm)
    n_idle = idx.n_idle
    end = B[:, :n_idle].toarray()
    act = B[:, n_idle:]
    for _ in range(idx.frames + 1):
        if act.nnz == 0:
            break
        nxt = act @ P_act
        end += nxt[:, :n_idle].toarray()
        act = nxt[:, n_idle:]
        act.eliminate_zeros()
    nxt_begin = (P_idle.T @ end.T).T
    return np.asarray(nxt_begin[:, slots])


def kernel_stationary(K: np.ndarray) -> np.ndarray:
    """Stationary pmf of the round-to-round kernel (independent route to the energy pmf)."""
    n = K.shape[0]
    A = K.T - np.eye(n)
    A[0, :] = 1.0
    b = np.zeros(n)
    b[0] = 1.0
    pi = np.clip(scipy.linalg.solve(A, b), 0.0, None)
    return pi / pi.sum()
