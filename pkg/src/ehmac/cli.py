"""Batch front-end: ``ehmac analyze|simulate|compare|tradeoff``.

A config file is either a single scenario or a sweep::

    {"base": {...scenario...},
     "axes": {"rho": [...], "mu_H": [...], "gamma_th_db": [...],
              "protocol": [...], "backlog_mode": [...]},
     "replicas": 1, "n_irs": 6000, "warmup": 2000}

Results are CSV rows in grid order plus a ``<out>.manifest.json`` file.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .metrics import analyze, tradeoff_curve
from .model import ConfigError, SystemConfig, validate
from .sim import DEFAULT_WARMUP, run_replicas

CSV_FIELDS = ["protocol", "rho", "mu_H", "gamma_th_db", "alpha", "M", "F_eps", "source",
              "p_d", "p_t", "se_p_d", "se_p_t", "seed"]
KEY_FIELDS = ["protocol", "rho", "mu_H", "gamma_th_db", "alpha", "M", "F_eps"]
AXES = ("mu_H", "gamma_th_db", "protocol", "rho", "backlog_mode")
TOLERANCES = {"sim-known": 0.02, "sim-estimated": 0.03, "analysis": 0.02}


class CliError(RuntimeError):
    pass


@dataclass
class SweepSpec:
    base: SystemConfig
    axes: Dict[str, list] = field(default_factory=dict)
    replicas: int = 1
    n_irs: int = 6000
    warmup: int = DEFAULT_WARMUP

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        if "base" not in d:
            return cls(base=validate(SystemConfig.from_dict(d)))
        spec = cls(
            base=validate(SystemConfig.from_dict(d["base"])),
            axes={k: list(v) for k, v in d.get("axes", {}).items()},
            replicas=int(d.get("replicas", 1)),
            n_irs=int(d.get("n_irs", 6000)),
            warmup=int(d.get("warmup", DEFAULT_WARMUP)),
        )
        for k, v in spec.axes.items():
            if k not in AXES:
                raise ConfigError(f"axes.{k}", f"unknown axis; expected one of {AXES}")
            if not v:
                raise ConfigError(f"axes.{k}", "axis is empty")
        for cfg in spec.points(include_mode=True):
            validate(cfg)
        return spec

    def points(self, include_mode: bool = False, fixed: Optional[dict] = None) -> List[SystemConfig]:
        """Grid configurations in a fixed order (axes nested as in ``AXES``)."""
        names = [a for a in AXES if a in self.axes and (include_mode or a != "backlog_mode")]
        if fixed:
            names = [a for a in names if a not in fixed]
        out = []
        for combo in itertools.product(*(self.axes[a] for a in names)):
            changes = dict(zip(names, combo))
            if fixed:
                changes.update(fixed)
            out.append(validate(self.base.replace(**changes)))
        return out


def _mu(cfg: SystemConfig):
    return cfg.harvest.mu_H if cfg.harvest.kind == "geometric" else ""


def _num(x) -> str:
    if x == "" or x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def _row(cfg: SystemConfig, source: str, p_d, p_t, se_d, se_t, seed) -> dict:
    return {
        "protocol": cfg.protocol, "rho": _num(cfg.rho), "mu_H": _num(_mu(cfg)),
        "gamma_th_db": _num(cfg.gamma_th_db), "alpha": _num(cfg.alpha), "M": str(cfg.M),
        "F_eps": str(cfg.F_eps), "source": source, "p_d": _num(p_d), "p_t": _num(p_t),
        "se_p_d": _num(se_d), "se_p_t": _num(se_t), "seed": str(seed),
    }


def _where(cfg: SystemConfig) -> str:
    return (f"protocol={cfg.protocol} rho={cfg.rho:g} mu_H={_mu(cfg)} "
            f"gamma_th_db={cfg.gamma_th_db:g} mode={cfg.backlog_mode}")


def _analyze_point(cfg: SystemConfig) -> dict:
    try:
        r = analyze(cfg)
    except (ValueError, RuntimeError) as exc:
        raise CliError(f"at {_where(cfg)}: {exc}") from exc
    return _row(cfg, "analysis", r.p_d, r.p_t, "", "", cfg.tolerances.rng_seed)


def _simulate_point(args) -> dict:
    cfg, n_irs, warmup, seed, replicas = args
    try:
        r = run_replicas(cfg, n_irs, warmup, seed, replicas)
    except (ValueError, RuntimeError) as exc:
        raise CliError(f"at {_where(cfg)}: {exc}") from exc
    return _row(cfg, f"sim-{cfg.backlog_mode}", r.p_d, r.p_t, r.se_p_d, r.se_p_t, seed)


def _workers() -> int:
    env = os.environ.get("EHMAC_THREADS")
    return max(1, int(env)) if env else (os.cpu_count() or 1)


def _map(fn, items: Sequence):
    n = min(_workers(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def point_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(i,)).generate_state(1, np.uint64)[0])


def analyze_rows(spec: SweepSpec) -> List[dict]:
    return _map(_analyze_point, spec.points())


def simulate_rows(spec: SweepSpec, seed: int) -> List[dict]:
    pts = spec.points(include_mode=True)
    jobs = [(cfg, spec.n_irs, spec.warmup, point_seed(seed, i), spec.replicas)
            for i, cfg in enumerate(pts)]
    return _map(_simulate_point, jobs)


def tradeoff_rows(spec: SweepSpec) -> List[dict]:
    rhos = spec.axes.get("rho", [spec.base.rho])
    if not rhos:
        raise CliError("tradeoff needs a non-empty rho axis")
    outer = [a for a in ("mu_H", "gamma_th_db", "protocol") if a in spec.axes]
    rows = []
    for combo in itertools.product(*(spec.axes[a] for a in outer)):
        cfg = validate(spec.base.replace(**dict(zip(outer, combo))))
        for pt in tradeoff_curve(cfg, [float(r) for r in rhos]):
            rows.append({"protocol": cfg.protocol, "mu_H": _num(_mu(cfg)),
                         "gamma_th_db": _num(cfg.gamma_th_db), "rho": _num(pt.rho),
                         "p_d": _num(pt.p_d), "p_t": _num(pt.p_t)})
    return rows


def to_csv(rows: List[dict], fields: Sequence[str] = CSV_FIELDS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def read_csv(path: str) -> List[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _key(row: dict) -> tuple:
    out = []
    for k in KEY_FIELDS:
        v = row.get(k, "")
        try:
            v = float(v)
        except ValueError:
            pass
        out.append(v)
    return tuple(out)


def compare(analysis: List[dict], sim: List[dict], tolerances: Optional[dict] = None) -> dict:
    """Per-point gaps between analysis rows and simulation rows.

    Raises :class:`CliError` listing every simulation key without an
    analysis counterpart.
    """
    tol = dict(TOLERANCES)
    tol.update(tolerances or {})
    ref = {_key(r): r for r in analysis}
    missing = [r for r in sim if _key(r) not in ref]
    if missing:
        keys = ", ".join(str(dict(zip(KEY_FIELDS, _key(r)))) for r in missing)
        raise CliError(f"no analysis row for grid point(s): {keys}")
    points = []
    for r in sim:
        a = ref[_key(r)]
        gd = abs(float(r["p_d"]) - float(a["p_d"])) if r["p_d"] and a["p_d"] else 0.0
        gt = abs(float(r["p_t"]) - float(a["p_t"])) if r["p_t"] and a["p_t"] else 0.0
        t = tol.get(r["source"], tol["sim-known"])
        points.append({**{k: r[k] for k in KEY_FIELDS}, "source": r["source"],
                       "gap_p_d": gd, "gap_p_t": gt, "tolerance": t,
                       "pass": gd <= t and gt <= t})
    gaps = [p["gap_p_d"] for p in points] + [p["gap_p_t"] for p in points]
    return {
        "points": points,
        "max_gap_p_d": max((p["gap_p_d"] for p in points), default=0.0),
        "max_gap_p_t": max((p["gap_p_t"] for p in points), default=0.0),
        "mean_gap": float(np.mean(gaps)) if gaps else 0.0,
        "pass": all(p["pass"] for p in points),
    }


def _load_spec(path: str) -> SweepSpec:
    with open(path) as f:
        return SweepSpec.from_dict(json.load(f))


def _write(out: Optional[str], text: str, manifest: Optional[dict] = None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    with open(out, "w", newline="") as f:
        f.write(text)
    if manifest is not None:
        with open(out + ".manifest.json", "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)


def _manifest(command: str, config_path: str, seed, rows: int) -> dict:
    with open(config_path, "rb") as f:
        digest = hashlib.sha256(f.read()).hexdigest()
    return {"command": command, "config": config_path, "config_sha256": digest,
            "seed": seed, "rows": rows}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ehmac", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="analytical metrics for every grid point")
    a.add_argument("--config", required=True)
    a.add_argument("--out")

    s = sub.add_parser("simulate", help="simulated metrics for every grid point")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--replicas", type=int)
    s.add_argument("--irs", type=int, help="rounds per replica, warmup included")
    s.add_argument("--warmup", type=int)

    c = sub.add_parser("compare", help="gaps between an analysis CSV and a simulation CSV")
    c.add_argument("analysis")
    c.add_argument("sim")
    c.add_argument("--out")
    c.add_argument("--tol-known", type=float, default=TOLERANCES["sim-known"])
    c.add_argument("--tol-estimated", type=float, default=TOLERANCES["sim-estimated"])

    t = sub.add_parser("tradeoff", help="delivery/time-efficiency envelope over the rho axis")
    t.add_argument("--config", required=True)
    t.add_argument("--out")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "analyze":
            spec = _load_spec(args.config)
            rows = analyze_rows(spec)
            _write(args.out, to_csv(rows),
                   _manifest("analyze", args.config, spec.base.tolerances.rng_seed, len(rows)))
        elif args.command == "simulate":
            spec = _load_spec(args.config)
            if args.replicas is not None:
                spec.replicas = args.replicas
            if args.irs is not None:
                spec.n_irs = args.irs
            if args.warmup is not None:
                spec.warmup = args.warmup
            rows = simulate_rows(spec, args.seed)
            _write(args.out, to_csv(rows), _manifest("simulate", args.config, args.seed, len(rows)))
        elif args.command == "compare":
            report = compare(read_csv(args.analysis), read_csv(args.sim),
                             {"sim-known": args.tol_known, "sim-estimated": args.tol_estimated,
                              "analysis": args.tol_known})
            _write(args.out, json.dumps(report, indent=2) + "\n")
            print(f"max gap p_d={report['max_gap_p_d']:.4f} p_t={report['max_gap_p_t']:.4f} "
                  f"mean={report['mean_gap']:.4f} -> {'PASS' if report['pass'] else 'FAIL'}",
                  file=sys.stderr)
            return 0 if report["pass"] else 1
        elif args.command == "tradeoff":
            spec = _load_spec(args.config)
            rows = tradeoff_rows(spec)
            _write(args.out, to_csv(rows, ["protocol", "mu_H", "gamma_th_db", "rho", "p_d", "p_t"]),
                   _manifest("tradeoff", args.config, spec.base.tolerances.rng_seed, len(rows)))
    except (ConfigError, CliError, OSError, ValueError, RuntimeError) as exc:
        print(f"ehmac {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
