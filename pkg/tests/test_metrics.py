import math

import numpy as np
import pytest

from ehmac.capture import CaptureTable, build_capture_table, disabled_capture_table
from ehmac.markov import EnergyDistribution
from ehmac.metrics import (MetricsError, TradeoffPoint, analyze, delivery_dfa, delivery_fa,
                           delivery_tdma, expected_backlogs, pareto_envelope, time_eff_dfa,
                           time_eff_fa, time_eff_tdma, tradeoff_curve)
from ehmac.model import evaluation_config

from conftest import tiny_config

E1 = math.exp(-1)


def level(x, frames=1):
    """Energy law with G(eps) = x; the charged sensors hold ``frames`` transmissions."""
    pmf = np.zeros(frames + 1)
    pmf[0], pmf[-1] = 1 - x, x
    return EnergyDistribution(pmf, eps_units=1)


def constant_table(p, frames, p_slot=None):
    p_slot = np.full(frames, p if p_slot is None else p_slot)
    return CaptureTable(p_cond=np.ones((frames, 1)), p_marg=np.full(frames, p), p_slot=p_slot,
                        rho=1.0, gamma_th=2.0, J_max=0)


def test_tdma_delivery():
    assert delivery_tdma(level(0.7)) == 0.7
    assert delivery_tdma(level(0.0)) == 0.0
    assert analyze(tiny_config()).p_d == pytest.approx(0.5, abs=1e-12)


def test_tdma_saturated_harvest():
    r = analyze(evaluation_config(mu_H=50.0, protocol="TDMA"))
    assert r.p_d > 1 - 1e-6


def test_tdma_starvation():
    from ehmac.model import HarvestModel
    cfg = tiny_config().replace(harvest=HarvestModel.from_pmf([1 - 1e-9, 1e-9]))
    assert analyze(cfg).p_d < 1e-8


def test_fa_delivery():
    assert delivery_fa(level(1.0), disabled_capture_table(1.0)) == pytest.approx(E1, abs=1e-9)
    assert delivery_fa(level(0.0), disabled_capture_table(1.0)) == 0.0
    t = build_capture_table(evaluation_config(protocol="FA"))
    assert delivery_fa(level(1.0), t) == pytest.approx(0.5137, abs=1e-4)


def test_dfa_single_frame_is_fa():
    t = build_capture_table(evaluation_config(protocol="FA", rho=1.5))
    G = level(0.6)
    assert delivery_dfa(G, t)[0] == delivery_fa(G, t)
    assert time_eff_dfa(t, G, 400, 0.3)[0] == time_eff_fa(t)


def test_dfa_sure_capture():
    assert delivery_dfa(level(0.4, 10), constant_table(1.0, 10))[0] == pytest.approx(0.4)


def test_dfa_geometric_identity():
    p = 0.37
    d, add = delivery_dfa(level(1.0, 10), constant_table(p, 10))
    assert d == pytest.approx(1 - (1 - p) ** 10, abs=1e-14)
    np.testing.assert_allclose(add, p * (1 - p) ** np.arange(10), rtol=1e-14)


def test_time_efficiencies():
    assert time_eff_tdma(0.3, level(0.5)) == pytest.approx(0.15)
    assert time_eff_tdma(1.0, analyze(tiny_config()).energy) == pytest.approx(0.5, abs=1e-12)
    assert time_eff_tdma(0.0, level(0.9)) == 0.0
    assert time_eff_fa(disabled_capture_table(1.0)) == pytest.approx(E1, abs=1e-9)
    assert time_eff_fa(disabled_capture_table(2.0)) == pytest.approx(0.5 * math.exp(-0.5), abs=1e-9)
    assert time_eff_fa(build_capture_table(evaluation_config(protocol="FA"))) == pytest.approx(0.5137, abs=1e-4)


def test_dfa_weighting():
    G = level(0.8, 10)
    t = constant_table(0.4, 10, p_slot=0.21)
    p, EB = time_eff_dfa(t, G, 400, 0.3)
    assert p == pytest.approx(0.21, abs=1e-15)
    assert EB[0] == pytest.approx(400 * 0.3 * 0.8)
    assert expected_backlogs(t, G, 400, 0.3)[1] == pytest.approx(96 * 0.6)
    with pytest.raises(MetricsError):
        time_eff_dfa(t, G, 400, 0.0)


@pytest.mark.parametrize("mu", [0.15, 0.35])
@pytest.mark.parametrize("rho", [0.5, 1.0, 2.0])
def test_tdma_bounds_fa_with_shared_energy(mu, rho):
    tdma = analyze(evaluation_config(mu_H=mu, rho=rho, protocol="TDMA"))
    fa = analyze(evaluation_config(mu_H=mu, rho=rho, protocol="FA"))
    assert tdma.energy.pmf.tolist() == fa.energy.pmf.tolist()
    assert tdma.p_d >= fa.p_d
    assert tdma.p_t / tdma.p_d == pytest.approx(0.3, rel=1e-12)


def test_fa_stationary_charge_without_overflow():
    # harvest in = energy out while the storage never fills
    r = analyze(evaluation_config(mu_H=0.15, protocol="FA"))
    assert r.energy.G_eps(1) == pytest.approx(0.15 / 0.3, abs=1e-3)


def test_dfa_report_shape():
    r = analyze(evaluation_config(mu_H=0.35, protocol="DFA"))
    assert r.addends.size == 10 and r.p_d == pytest.approx(r.addends.sum())
    assert r.backlog[0] == pytest.approx(400 * 0.3 * r.energy.G_eps(1))
    assert 0 < r.p_t < 1


def test_transient_metrics_start_from_initial_energy():
    cfg = evaluation_config(protocol="TDMA", initial_energy="full")
    assert analyze(cfg, ir=1).p_d == 1.0
    far = analyze(cfg, ir=4000).p_d
    assert far == pytest.approx(analyze(cfg).p_d, abs=1e-6)


def test_tradeoff_tdma_single_point():
    pts = tradeoff_curve(evaluation_config(protocol="TDMA"), [0.5, 1.0, 2.0, 3.0])
    assert len(pts) == 1


def test_tradeoff_single_grid_point():
    assert len(tradeoff_curve(evaluation_config(protocol="FA"), [1.0])) == 1


def test_tradeoff_empty_grid():
    with pytest.raises(MetricsError):
        tradeoff_curve(evaluation_config(protocol="FA"), [])


@pytest.mark.parametrize("protocol", ["FA", "DFA"])
def test_envelope_is_non_increasing(protocol):
    step = 0.1 if protocol == "FA" else 0.25
    rho = np.round(np.arange(0.5, 3.01, step), 2)
    pts = tradeoff_curve(evaluation_config(mu_H=0.35, protocol=protocol), rho)
    pt = [p.p_t for p in pts]
    pd = [p.p_d for p in pts]
    assert pt == sorted(pt)
    assert all(a >= b for a, b in zip(pd, pd[1:]))


def test_pareto_drops_dominated_points():
    pts = [TradeoffPoint("FA", 1, 0.5, 0.30), TradeoffPoint("FA", 2, 0.4, 0.20),
           TradeoffPoint("FA", 3, 0.6, 0.10), TradeoffPoint("FA", 4, 0.55, 0.101)]
    env = pareto_envelope(pts)
    assert [p.rho for p in env] == [3, 1]
