import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ainrelay import ain_scalar, link_sim
from ainrelay.ain_mimo import build_beams, compute_effective_channels, relay_combinations
from ainrelay.channel import RunSeed, complex_gaussian, sample_mimo_channel
from ainrelay.dof import sample_generic_scalar_setup
from ainrelay.errors import RankDeficiencyError
from ainrelay.link_sim import (
    RelayMode, mimo_budget, mimo_rates, run_mimo_trial, run_scalar_trial,
    simulate_mimo_link, snr_to_power, zf_sinr,
)


def setup(m=4, i=0):
    ch = sample_mimo_channel(m, RunSeed(20, i))
    return ch, build_beams(ch, RunSeed(21, i))


def covariance_oracle(h, k, stream):
    """Noise power of one ZF output, row by row with explicit sums."""
    n = h.shape[0]
    w = np.linalg.solve(h, np.eye(n))[stream]
    return sum((w[a] * k[a, b] * np.conj(w[b])).real for a in range(n) for b in range(n))


# -- zf_sinr -----------------------------------------------------------------

def test_zf_sinr_identity():
    assert zf_sinr(np.eye(4), 0, 1.0, 1.0) == pytest.approx(1.0)


@given(mag=st.floats(0.01, 100), phase=st.floats(0, 6.3))
def test_zf_sinr_homogeneous(mag, phase):
    rng = np.random.default_rng(3)
    h = complex_gaussian(rng, (4, 4))
    c = mag * np.exp(1j * phase)
    base = zf_sinr(h, slice(None), 1.0, 2.0)
    np.testing.assert_allclose(zf_sinr(c * h, slice(None), 1.0, 2.0), mag**2 * base, rtol=1e-9)


def test_zf_sinr_covariance_oracle():
    rng = np.random.default_rng(4)
    h = complex_gaussian(rng, (4, 4))
    a = complex_gaussian(rng, (4, 4))
    k = np.eye(4) + a @ a.conj().T
    for stream in range(4):
        expect = 3.0 / covariance_oracle(h, k, stream)
        assert zf_sinr(h, stream, k, 3.0) == pytest.approx(expect, rel=1e-9)


def test_zf_sinr_accepts_effective_channels():
    ch, b = setup()
    eff = compute_effective_channels(ch, b)
    np.testing.assert_array_equal(zf_sinr(eff, slice(None), 1.0, 1.0, dest=2),
                                  zf_sinr(eff.stacked(2), slice(None), 1.0, 1.0))


def test_zf_sinr_singular():
    with pytest.raises(RankDeficiencyError):
        zf_sinr(np.ones((3, 3)), 0, 1.0, 1.0)
    with pytest.raises(RankDeficiencyError):
        zf_sinr(np.ones((3, 2)), 0, 1.0, 1.0)


# -- MIMO power and rates ------------------------------------------------------

def test_budget_respects_power():
    ch, b = setup()
    for mode in ("genie", "zf_forward"):
        for snr in (0, 30, 60):
            power = snr_to_power(snr)
            bud = mimo_budget(ch, b, power, mode)
            if not bud.feasible:
                assert mode == "zf_forward" and bud.p_stream == 0
                assert mimo_rates(ch, b, snr, mode) == (0.0, 0.0)
                continue
            assert 3 * b.r * bud.p_stream <= power * (1 + 1e-12)
            c_r = np.sum(np.linalg.norm(b.relay_beam_matrix(), axis=0) ** 2
                         * b.relay_symbol_weights())
            fwd = 0.0
            if mode == "zf_forward":
                vr = b.relay_beam_matrix()
                fwd = np.trace(vr @ bud.relay_noise_cov @ vr.conj().T).real
            assert bud.p_stream * c_r + fwd <= power * (1 + 1e-12)


@pytest.mark.parametrize("mode", ["genie", "zf_forward"])
def test_power_audit_monte_carlo(mode):
    ch, b = setup(8, 1)
    rng = np.random.default_rng(0)
    n = 10**4
    for snr in (60, 80, 100):
        power = snr_to_power(snr)
        amp = math.sqrt(mimo_budget(ch, b, power, mode).p_stream)
        s1 = amp * link_sim.qpsk(rng, (6, n))
        s2 = amp * link_sim.qpsk(rng, (6, n))
        noise = tuple(complex_gaussian(rng, (8, n)) for _ in range(3))
        out = simulate_mimo_link(ch, b, s1, s2, mode, noise=noise)
        assert max(out.tx_power) <= 1.01 * power


def test_zf_forward_noise_model_monte_carlo():
    # empirical error variance of the destination ZF outputs matches the
    # analytic covariance (relay noise forwarded plus destination noise)
    ch, b = setup(4, 2)
    bud = mimo_budget(ch, b, snr_to_power(20), "zf_forward")
    eff = compute_effective_channels(ch, b)
    rng = np.random.default_rng(1)
    n = 10**5
    amp = math.sqrt(bud.p_stream)
    s1 = amp * link_sim.qpsk(rng, (3, n))
    s2 = amp * link_sim.qpsk(rng, (3, n))
    noise = tuple(complex_gaussian(rng, (4, n)) for _ in range(3))
    out = simulate_mimo_link(ch, b, s1, s2, "zf_forward", noise=noise, effective=eff)
    err1 = out.d1 - np.vstack([s1, s2[2:]])
    emp = np.mean(np.abs(err1) ** 2, axis=1)
    expect = bud.p_stream / zf_sinr(eff, slice(None), bud.noise_cov_d1, bud.p_stream)
    np.testing.assert_allclose(emp, expect, rtol=0.05)


def test_genie_noise_free_limit():
    ch, b = setup()
    r_hi = mimo_rates(ch, b, 60, "genie", noise_var=1e-12)
    r_lo = mimo_rates(ch, b, 60, "genie")
    assert min(r_hi) > max(r_lo) + 100
    ser = link_sim.mimo_ser(ch, b, 20, "genie", 1000, RunSeed(0), noise_var=1e-12)
    assert ser == (0.0, 0.0)


def test_finite_difference_slope():
    ch, b = setup(4, 3)
    r60 = sum(mimo_rates(ch, b, 60, "genie"))
    r70 = sum(mimo_rates(ch, b, 70, "genie"))
    slope = (r70 - r60) / math.log2(10)
    assert 5.5 <= slope <= 6.5


def test_run_mimo_trial_deterministic():
    ch, b = setup()
    a = run_mimo_trial(ch, b, 40, "zf_forward", RunSeed(1, 2), n_noise=200)
    c = run_mimo_trial(ch, b, 40, "zf_forward", RunSeed(1, 2), n_noise=200)
    assert a == c
    assert all(r >= 0 for r in a.rates)
    assert all(0 <= s <= 1 for s in a.ser)
    assert max(a.residuals) <= 1e-10


@given(lo=st.floats(-10, 100), step=st.floats(0.1, 30), i=st.integers(0, 20))
def test_rate_monotone_in_snr(lo, step, i):
    ch, b = setup(4, i)
    r0 = mimo_rates(ch, b, lo, "genie")
    r1 = mimo_rates(ch, b, lo + step, "genie")
    assert r1[0] >= r0[0] and r1[1] >= r0[1]


def test_zf_forward_below_genie_bounded_gap():
    ch, b = setup(4, 5)
    gaps = []
    for snr in (40, 60, 80, 100):
        g = sum(mimo_rates(ch, b, snr, "genie"))
        z = sum(mimo_rates(ch, b, snr, "zf_forward"))
        assert z <= g + 1e-9
        gaps.append(g - z)
    assert abs(gaps[-1] - gaps[1]) < 0.1


def test_hard_decision_rejected_for_mimo():
    ch, b = setup()
    with pytest.raises(ValueError):
        mimo_rates(ch, b, 30, "hard_decision")
    with pytest.raises(ValueError):
        RelayMode("nonsense")


def test_noise_free_mimo_link_exact():
    for i in range(10):
        ch, b = setup(8, i)
        rng = np.random.default_rng(i)
        s1 = link_sim.qpsk(rng, (6, 5))
        s2 = link_sim.qpsk(rng, (6, 5))
        for mode in ("genie", "zf_forward"):
            out = simulate_mimo_link(ch, b, s1, s2, mode)
            np.testing.assert_allclose(out.d1, np.vstack([s1, s2[4:]]), atol=1e-9)
            np.testing.assert_allclose(out.d2, np.vstack([s2, s1[2:4]]), atol=1e-9)


def test_genie_combinations_match_relay_view():
    ch, b = setup()
    s1 = np.arange(3) + 1j
    s2 = np.arange(3) - 2j
    z = relay_combinations(b, s1, s2)
    assert z[2] == pytest.approx(b.lambda2[0, 0] * s1[1] + s2[1])


# -- scalar trials -------------------------------------------------------------

@pytest.fixture(scope="module")
def scalar_setup():
    return sample_generic_scalar_setup(0, 3)


def test_scalar_zero_noise_no_errors(scalar_setup):
    ch, bs = scalar_setup
    sch = ain_scalar.build_scalar_scheme(ch, 1e6, 2, bs)
    res = run_scalar_trial(ch, sch, 1e6, "hard_decision", 2000, RunSeed(0), noise_var=0.0)
    assert res.ser_submessages == ((0.0,) * 3, (0.0,) * 3)
    expect = ain_scalar.rate_lower_bound(0, 2)
    assert res.rates == pytest.approx((3 * expect, 3 * expect))


def test_scalar_ser_falls_with_power(scalar_setup):
    ch, bs = scalar_setup
    ser = []
    for p in (1e6, 1e10):
        sch = ain_scalar.build_scalar_scheme(ch, p, ain_scalar.choose_q(p), bs)
        res = run_scalar_trial(ch, sch, p, "hard_decision", 10**4, RunSeed(0, 1))
        ser.append(np.array(res.ser_submessages))
    assert np.all(ser[1] < ser[0])


def test_scalar_genie_matches_hard_decision_at_high_power(scalar_setup):
    ch, bs = scalar_setup
    p = 1e12
    sch = ain_scalar.build_scalar_scheme(ch, p, ain_scalar.choose_q(p), bs)
    rng = np.random.default_rng(0)
    s = link_sim.draw_scalar_symbols(rng, sch.q, 5000)
    noise = rng.standard_normal((3, 5000))
    hard = link_sim.simulate_scalar_link(ch, sch, s, "hard_decision", noise=noise)
    np.testing.assert_array_equal(hard.relay_estimates, hard.relay_truth)
    a = run_scalar_trial(ch, sch, p, "hard_decision", 5000, RunSeed(3))
    g = run_scalar_trial(ch, sch, p, "genie", 5000, RunSeed(3))
    assert a.ser_submessages == g.ser_submessages


def test_scalar_trial_power_mismatch(scalar_setup):
    ch, bs = scalar_setup
    sch = ain_scalar.build_scalar_scheme(ch, 1e6, 2, bs)
    with pytest.raises(ValueError):
        run_scalar_trial(ch, sch, 1e7, "genie", 10, RunSeed(0))
    with pytest.raises(ValueError):
        run_scalar_trial(ch, sch, 1e6, "zf_forward", 10, RunSeed(0))


def test_scalar_power_audit(scalar_setup):
    ch, bs = scalar_setup
    for p_db in (60, 90, 120):
        p = snr_to_power(p_db)
        sch = ain_scalar.build_scalar_scheme(ch, p, ain_scalar.choose_q(p), bs)
        rng = np.random.default_rng(p_db)
        s = link_sim.draw_scalar_symbols(rng, sch.q, 10**5)
        out = link_sim.simulate_scalar_link(ch, sch, s, "genie")
        assert max(out.tx_power) <= 1.01 * p


def test_scalar_trial_deterministic(scalar_setup):
    ch, bs = scalar_setup
    sch = ain_scalar.build_scalar_scheme(ch, 1e6, 2, bs)
    a = run_scalar_trial(ch, sch, 1e6, "hard_decision", 500, RunSeed(8))
    b = run_scalar_trial(ch, sch, 1e6, "hard_decision", 500, RunSeed(8))
    assert a == b
    assert a.snr_db == pytest.approx(60.0)
