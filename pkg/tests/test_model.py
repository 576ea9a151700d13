import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ehmac.model import (ConfigError, EnergyConfig, FadingModel, HarvestModel, SystemConfig,
                         db_to_linear, linear_to_db, evaluation_config, validate)


def test_evaluation_energy_grid_accepted():
    e = EnergyConfig(delta=1 / 50, N=500, eps_units=50)
    e.validate()
    assert e.F_eps == 10
    assert EnergyConfig.from_eps(1.0, 1 / 50, 10) == e


def test_storage_must_be_multiple_of_cost():
    with pytest.raises(ConfigError) as exc:
        EnergyConfig(delta=1.0, N=10, eps_units=3).validate()
    assert exc.value.param == "energy.N"


def test_geometric_parameter_at_low_harvest():
    h = HarvestModel.geometric(0.15, 50)
    assert h.xi == pytest.approx(0.02 / 0.17, rel=1e-12)
    q = h.pmf(20000)
    assert q[0] == pytest.approx(0.117647, abs=1e-6)
    assert q.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("mu", [0.05, 0.15, 0.35, 2.0])
def test_geometric_mean_in_delta_units(mu):
    h = HarvestModel.geometric(mu, 50)
    n = 1
    while h.tail(n) > 1e-16:
        n *= 2
    q = h.pmf(n)
    assert np.dot(np.arange(n), q) == pytest.approx(mu * 50, abs=1e-9)
    assert h.mean() == pytest.approx(mu * 50, rel=1e-12)


def test_tail_matches_pmf_sum():
    h = HarvestModel.geometric(0.35, 50)
    for m in (0, 1, 7, 100):
        assert h.tail(m) == pytest.approx(1 - h.pmf(m).sum(), abs=1e-14)
    f = HarvestModel.from_pmf([0.2, 0.5, 0.3])
    assert f.tail(2) == pytest.approx(0.3)
    assert f.tail(5) == 0.0


@pytest.mark.parametrize("q, param", [([1.0, 0.0], "harvest.q_1"), ([0.0, 1.0], "harvest.q_0"),
                                      ([0.5, 0.6], "harvest.q"), ([-0.1, 1.1], "harvest.q")])
def test_harvest_pmf_rejections(q, param):
    with pytest.raises(ConfigError) as exc:
        HarvestModel.from_pmf(q).validate()
    assert exc.value.param == param


@pytest.mark.parametrize("field, value", [("M", 0), ("alpha", 1.5), ("gamma_th", 1.0),
                                          ("rho", 0.0), ("protocol", "CSMA"),
                                          ("backlog_mode", "guess"), ("initial_energy", "half")])
def test_validate_names_bad_parameter(field, value):
    cfg = evaluation_config()
    with pytest.raises(ConfigError) as exc:
        validate(cfg.replace(**{field: value}))
    assert exc.value.param == field


def test_zero_db_threshold_rejected():
    with pytest.raises(ConfigError):
        evaluation_config(gamma_th_db=0.0)


def test_db_conversion():
    assert db_to_linear(3.0) == pytest.approx(1.99526, abs=1e-5)
    assert linear_to_db(db_to_linear(3.0)) == 3.0


def test_evaluation_defaults():
    cfg = evaluation_config()
    assert (cfg.M, cfg.alpha, cfg.F_eps, cfg.energy.N, cfg.energy.eps_units) == (400, 0.3, 10, 500, 50)
    assert cfg.gamma_th_db == 3.0


def test_initial_presets():
    cfg = evaluation_config()
    assert cfg.replace(initial_energy="full").initial_pmf()[-1] == 1.0
    assert cfg.replace(initial_energy="empty").initial_pmf()[0] == 1.0
    u = cfg.initial_pmf()
    assert u.sum() == pytest.approx(1.0) and np.ptp(u) == 0.0
    with pytest.raises(ConfigError):
        validate(cfg.replace(initial_energy=[0.5, 0.5]))


def test_nakagami_fading_has_unit_mean(rng):
    f = FadingModel(kind="nakagami", m=2.0)
    f.validate()
    assert f.sample(rng, 200_000).mean() == pytest.approx(1.0, abs=0.01)


def test_json_shortcuts():
    d = evaluation_config().to_dict()
    d["energy"] = {"delta": 0.02, "eps": 1.0, "F_eps": 10}
    cfg = SystemConfig.from_json(json.dumps(d))
    assert cfg.energy == evaluation_config().energy


configs = st.builds(
    lambda M, alpha, gdb, rho, eps_units, F, mu, proto, mode, init: evaluation_config(
        mu_H=mu, rho=rho, protocol=proto, gamma_th_db=gdb, M=M, alpha=alpha,
        energy=EnergyConfig(delta=1.0 / eps_units, N=eps_units * F, eps_units=eps_units),
        harvest=HarvestModel.geometric(mu, eps_units), backlog_mode=mode, initial_energy=init),
    st.integers(1, 1000), st.floats(0, 1), st.floats(0.01, 20), st.floats(0.05, 5),
    st.integers(1, 60), st.integers(1, 12), st.floats(0.01, 3),
    st.sampled_from(["TDMA", "FA", "DFA"]), st.sampled_from(["known", "estimated"]),
    st.sampled_from(["empty", "full", "uniform"]))


@settings(max_examples=60, deadline=None)
@given(configs)
def test_config_round_trip(cfg):
    again = SystemConfig.from_json(cfg.to_json())
    assert again.to_dict() == cfg.to_dict()
    assert again.harvest == cfg.harvest
    assert math.isclose(again.gamma_th, cfg.gamma_th, rel_tol=1e-11)
