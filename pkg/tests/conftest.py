import numpy as np
import pytest

from ehmac.model import EnergyConfig, HarvestModel, SystemConfig, validate


def tiny_config(protocol="TDMA", alpha=1.0, **kw):
    """Three-state chain: one unit of storage, one unit per transmission."""
    cfg = SystemConfig(M=kw.pop("M", 1), alpha=alpha, gamma_th=kw.pop("gamma_th", 2.0),
                       rho=kw.pop("rho", 1.0), energy=EnergyConfig(delta=1.0, N=1, eps_units=1),
                       harvest=HarvestModel.from_pmf([0.5, 0.5]), protocol=protocol, **kw)
    return validate(cfg)


def small_config(protocol="DFA", mu_H=0.4, N=12, eps_units=3, **kw):
    cfg = SystemConfig(M=kw.pop("M", 50), alpha=kw.pop("alpha", 0.5),
                       gamma_th=kw.pop("gamma_th", 2.0), rho=kw.pop("rho", 1.0),
                       energy=EnergyConfig(delta=1.0 / eps_units, N=N, eps_units=eps_units),
                       harvest=HarvestModel.geometric(mu_H, eps_units), protocol=protocol, **kw)
    return validate(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
