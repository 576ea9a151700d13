import math

import numpy as np
import pytest
from scipy import integrate, stats

from ehmac.capture import (CaptureError, CaptureTable, GainParticles, build_capture_table,
                           capture_cond, capture_cond_exponential, capture_curve,
                           disabled_capture_table, poisson_weight, poisson_weights,
                           propagate_gain_particles, truncation_point)
from ehmac.model import FadingModel, evaluation_config

G3 = 10 ** 0.3
EXP = FadingModel()


def laplace_oracle(gamma, j):
    """Pr[h >= gamma * S] with S ~ Gamma(j, 1), by numeric integration."""
    f = lambda s: stats.gamma.pdf(s, j) * math.exp(-gamma * s)
    return integrate.quad(f, 0, np.inf, limit=200)[0]


def test_no_interferer_always_captures(rng):
    assert capture_cond(EXP, G3, 0, 10) == (1.0, 0.0)


def test_one_interferer_monte_carlo(rng):
    p, se = capture_cond(EXP, G3, 1, 2_000_000, rng)
    assert 1 / (1 + G3) == pytest.approx(0.3339, abs=1e-4)
    assert abs(p - 1 / (1 + G3)) < 3 * se


@pytest.mark.parametrize("j", range(1, 8))
def test_closed_form_against_integration(j):
    assert capture_cond_exponential(G3, j) == pytest.approx(laplace_oracle(G3, j), rel=1e-8)


def test_curve_is_monotone_and_matches(rng):
    p, se = capture_curve(EXP, G3, 6, 1_000_000, rng)
    assert p[0] == 1.0
    assert np.all(np.diff(p) <= 0)
    exact = capture_cond_exponential(G3, np.arange(7))
    assert np.all(np.abs(p - exact) <= 3 * np.maximum(se, 1e-12))


def test_poisson_weights():
    assert poisson_weight(1.0, 0) == pytest.approx(math.exp(-1), rel=1e-14)
    assert poisson_weight(1.0, 1) == pytest.approx(math.exp(-1), rel=1e-14)
    for rho in (0.2, 0.5, 1.0, 3.0):
        J = truncation_point(rho, 1e-9)
        assert poisson_weights(rho, J).sum() >= 1 - 1e-9
        assert poisson_weights(rho, J - 1).sum() < 1 - 1e-9 or J == 0
        assert poisson_weight(rho, 3) == pytest.approx(poisson_weights(rho, 3)[3], rel=1e-12)


def test_particle_law_unchanged_without_capture(rng):
    p = GainParticles.initial(EXP, 50_000, rng)
    q = propagate_gain_particles(p, 1.0, math.inf, rng)
    assert q.frame == 2
    assert stats.ks_2samp(p.samples, q.samples).pvalue > 1e-3


def test_particle_count_contract(rng):
    p = GainParticles.initial(EXP, 20_000, rng)
    q = propagate_gain_particles(p, 1.0, G3, rng, n_out=100_000)
    assert q.sample_count == 100_000


def test_failures_are_weaker(rng):
    p = GainParticles.initial(EXP, 200_000, rng)
    q = propagate_gain_particles(p, 1.0, G3, rng)
    # brute-force oracle: one contention per sensor, keep the losers
    h = rng.exponential(size=2_000_000)
    J = rng.poisson(1.0, h.size)
    S = np.bincount(np.repeat(np.arange(h.size), J), weights=rng.exponential(size=J.sum()),
                    minlength=h.size)
    lost = h[(J > 0) & (h < G3 * S)]
    assert q.samples.mean() < 1.0
    assert q.samples.mean() == pytest.approx(lost.mean(), abs=0.01)


def test_acceptance_floor_aborts(rng):
    p = GainParticles.initial(EXP, 1000, rng)
    with pytest.raises(CaptureError, match="failure rate"):
        propagate_gain_particles(p, 1e6, G3, rng)


def test_disabled_table_is_slotted_aloha():
    for rho in (0.5, 1.0, 2.0):
        t = disabled_capture_table(rho)
        assert t.p_marg[0] == pytest.approx(math.exp(-1 / rho), abs=1e-9)
        assert t.p_slot[0] == pytest.approx(math.exp(-1 / rho) / rho, abs=1e-9)
    assert disabled_capture_table(2.0).p_slot[0] == pytest.approx(0.3033, abs=1e-4)


def test_first_frame_closed_form():
    cfg = evaluation_config(protocol="FA")
    t = build_capture_table(cfg)
    lam, g = 1.0, G3
    brute = sum(math.exp(-lam) * lam ** j / math.factorial(j) * (1 + g) ** -j for j in range(60))
    assert t.p_marg[0] == pytest.approx(brute, abs=1e-9)
    assert t.p_marg[0] == pytest.approx(0.5137, abs=1e-4)
    assert t.p_slot[0] == t.p_marg[0]


@pytest.mark.parametrize("rho", [0.75, 1.5])
def test_marginal_closed_form(rho):
    t = build_capture_table(evaluation_config(protocol="FA", rho=rho))
    assert t.p_marg[0] == pytest.approx(math.exp(-(1 / rho) * G3 / (1 + G3)), abs=1e-9)


def test_dfa_table_contract():
    t = build_capture_table(evaluation_config(protocol="DFA"))
    assert t.frames == 10 and t.p_cond.shape[0] == 10
    assert np.all(t.p_cond[:, 0] == 1.0)
    assert np.all((0 <= t.p_marg) & (t.p_marg <= 1))
    assert np.all((0 <= t.p_slot) & (t.p_slot <= 1))
    np.testing.assert_allclose(t.p_slot, t.p_marg, rtol=1e-12)
    slack = 3 * np.maximum(t.se_cond[:, 1:], t.se_cond[:, :-1])
    assert np.all(np.diff(t.p_cond, axis=1) <= slack + 1e-15)
    # later frames face weaker survivors
    assert np.all(np.diff(t.particle_means) < 0)
    assert not t.flags


def test_tdma_table_is_trivial():
    t = build_capture_table(evaluation_config(protocol="TDMA"))
    assert t.frames == 1 and t.p_marg[0] == 1.0


def test_table_deterministic_and_serializable():
    cfg = evaluation_config(protocol="DFA", rho=1.5)
    a = build_capture_table(cfg, cache=False)
    b = build_capture_table(cfg, cache=False)
    np.testing.assert_array_equal(a.p_cond, b.p_cond)
    c = CaptureTable.from_json(a.to_json())
    np.testing.assert_array_equal(c.p_marg, a.p_marg)
    assert c.J_max == a.J_max


def test_truncation_insensitivity():
    cfg = evaluation_config(protocol="FA", rho=0.5)
    t = build_capture_table(cfg)
    from ehmac.capture import marginals
    wider = capture_cond_exponential(G3, np.arange(t.J_max + 6))[None, :]
    assert abs(marginals(wider, 0.5)[0][0] - t.p_marg[0]) < 1e-9
