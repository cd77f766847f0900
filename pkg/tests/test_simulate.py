import math

import numpy as np
import pytest

from irslab import analytic as an
from irslab import channel as ch
from irslab.analytic import CodingConfig, SelectionConfig
from irslab.channel import SystemParams
from irslab.simulate import (MetricEstimate, MetricKind, Scheme, SimRequest, estimate, obf_paths,
                             simulate, simulate_atd, simulate_ct, simulate_obf, simulate_random,
                             simulate_rrc, simulate_td, wilson_half_width)


def agrees(est: MetricEstimate, ref: float, rel: float = 0.0) -> bool:
    return abs(est.value - ref) <= max(3 * est.std_error, rel * abs(ref))


class TestEstimate:
    def test_all_zero(self):
        e = estimate(np.zeros(1000), MetricKind.OUTAGE)
        assert e.value == 0.0 and e.half_width_95 > 0  # Wilson keeps a non-zero width

    def test_bernoulli_half_width(self):
        x = np.tile([0.0, 1.0], 500_000)
        e = estimate(x, MetricKind.OUTAGE)
        assert e.half_width_95 == pytest.approx(0.00098, abs=5e-6)

    def test_wilson_used_for_rare_events(self):
        x = np.zeros(10_000)
        x[:3] = 1
        assert estimate(x, MetricKind.OUTAGE).half_width_95 == pytest.approx(wilson_half_width(3, 10_000))

    def test_rate_moments(self):
        e = estimate([1.0, 2.0, 3.0])
        assert e.value == 2.0
        assert e.half_width_95 == pytest.approx(1.959963984540054 * 1.0 / math.sqrt(3))

    def test_validation(self):
        with pytest.raises(ValueError):
            MetricEstimate(1.5, 0.0, 1, MetricKind.OUTAGE)
        with pytest.raises(ValueError):
            MetricEstimate(0.5, -1.0, 1, MetricKind.RATE)
        with pytest.raises(ValueError):
            estimate([])


class TestRequest:
    @pytest.mark.parametrize("kwargs", [
        dict(scheme=Scheme.RRC),
        dict(scheme=Scheme.TD),
        dict(scheme=Scheme.CT),
        dict(scheme=Scheme.RANDOM, trials=0),
        dict(scheme=Scheme.TD, selection=SelectionConfig(3, 3)),
    ])
    def test_invalid(self, kwargs):
        base = dict(sp=SystemParams(4, 1.0), trials=10, seed=1)
        with pytest.raises(ValueError):
            SimRequest(**(base | kwargs))

    def test_string_scheme(self):
        assert SimRequest("Random", SystemParams(2, 1.0), 5, 1).scheme is Scheme.RANDOM


class TestDeterminism:
    @pytest.mark.parametrize("scheme,extra", [
        (Scheme.RANDOM, {}),
        (Scheme.RRC, dict(coding=CodingConfig(3))),
        (Scheme.OBF, dict(coding=CodingConfig(20, 10, 0.5))),
        (Scheme.TD, dict(selection=SelectionConfig(2, 2))),
        (Scheme.ATD, dict(selection=SelectionConfig(2, 2, 0.5))),
        (Scheme.CT, dict(sigma_e_sq=0.2)),
    ])
    def test_workers_do_not_change_results(self, scheme, extra):
        req = SimRequest(scheme, SystemParams(4, 1.0), 200_000, 7, **extra)
        a, b = simulate(req, 1), simulate(req, 4)
        assert a.outage == b.outage and a.rate == b.rate
        assert a.mean_snr == b.mean_snr and a.feedback_bits == b.feedback_bits
        if scheme is Scheme.OBF:
            np.testing.assert_array_equal(a.trajectory, b.trajectory)

    def test_replay(self):
        req = SimRequest(Scheme.RANDOM, SystemParams(3, 1.0), 1000, 3)
        assert simulate(req).rate == simulate(req).rate

    def test_seed_changes_result(self):
        sp = SystemParams(3, 1.0)
        assert simulate(SimRequest(Scheme.RANDOM, sp, 1000, 3)).rate != \
            simulate(SimRequest(Scheme.RANDOM, sp, 1000, 4)).rate


class TestRandom:
    @pytest.mark.parametrize("m,p", [(1, 1.0), (4, 0.1), (10, 10.0)])
    def test_matches_closed_form(self, m, p):
        sp = SystemParams(m, p)
        res = simulate_random(SimRequest(Scheme.RANDOM, sp, 400_000, 11))
        assert agrees(res.outage, an.outage_random(1.0, sp))
        assert agrees(res.rate, an.rate_random(sp))

    def test_zero_rate_threshold(self):
        res = simulate_random(SimRequest(Scheme.RANDOM, SystemParams(4, 1.0), 10_000, 1, rho=0.0))
        assert res.outage.value == 0.0

    def test_half_width_scaling(self):
        sp = SystemParams(4, 1.0)
        a = simulate_random(SimRequest(Scheme.RANDOM, sp, 100_000, 2)).rate.half_width_95
        b = simulate_random(SimRequest(Scheme.RANDOM, sp, 200_000, 2)).rate.half_width_95
        assert a / b == pytest.approx(math.sqrt(2), rel=0.05)


class TestRrc:
    def test_t1_is_random(self):
        sp = SystemParams(5, 1.0)
        a = simulate_rrc(SimRequest(Scheme.RRC, sp, 50_000, 4, coding=CodingConfig(1)))
        b = simulate_random(SimRequest(Scheme.RANDOM, sp, 50_000, 4))
        assert a.outage == b.outage and a.rate == b.rate

    def test_mean_rate_is_random_rate(self):
        # averaging over uses does not change the expected rate
        sp = SystemParams(4, 1.0)
        res = simulate_rrc(SimRequest(Scheme.RRC, sp, 200_000, 5, coding=CodingConfig(3)))
        assert agrees(res.rate, an.rate_random(sp))

    def test_outage_decreases_in_t(self):
        sp = SystemParams(10, 1.0)
        vals = [simulate_rrc(SimRequest(Scheme.RRC, sp, 200_000, 6, coding=CodingConfig(T))).outage.value
                for T in (1, 2, 3)]
        assert vals[0] > vals[1] > vals[2]

    @pytest.mark.xfail(strict=True, reason="correlated gains across uses lift the outage well "
                       "above the independence closed form (about 38% at T = 2)")
    def test_t2_within_ten_percent_of_independence_form(self):
        sp = SystemParams(10, 10.0)
        res = simulate_rrc(SimRequest(Scheme.RRC, sp, 1_000_000, 8, coding=CodingConfig(2)))
        ref = an.outage_rrc_ind(1.0, sp, 2)
        assert abs(res.outage.value - ref) <= 0.1 * ref


class TestObf:
    def req(self, **kw):
        base = dict(scheme=Scheme.OBF, sp=SystemParams(6, 1.0), trials=2000, seed=3,
                    coding=CodingConfig(60, 50, 0.3))
        return SimRequest(**(base | kw))

    def test_paths_monotone_and_bounded(self):
        out = obf_paths(self.req(), np.arange(2000), keep_paths=True)
        paths = out["paths"]
        assert np.all(np.diff(paths, axis=1) >= 0)
        assert np.all(paths <= out["bf_snr"][:, None] * (1 + 1e-12))

    def test_trajectory_is_mean_path(self):
        req = self.req()
        paths = obf_paths(req, np.arange(req.trials), keep_paths=True)["paths"]
        res = simulate_obf(req)
        np.testing.assert_allclose(res.trajectory, paths.mean(axis=0), rtol=1e-12)
        assert np.all(np.diff(res.trajectory) >= 0)

    def test_exchangeable_probe(self):
        # full-range step: the proposal is a fresh iid gain, so P(accept) = 1/2
        req = self.req(trials=200_000, coding=CodingConfig(2, 2, math.pi))
        res = simulate_obf(req)
        se = math.sqrt(0.25 / req.trials)
        assert abs(res.acceptance_rate - 0.5) < 3 * se

    def test_tau_one_is_random(self):
        sp = SystemParams(4, 1.0)
        a = simulate_obf(SimRequest(Scheme.OBF, sp, 20_000, 9, coding=CodingConfig(5, 1)))
        b = simulate_random(SimRequest(Scheme.RANDOM, sp, 20_000, 9))
        assert a.rate.value == pytest.approx(b.rate.value, rel=1e-12)

    def test_frozen_tail_adds_final_rate(self):
        # extending T past tau only appends uses at the final accepted SNR
        ids = np.arange(500)
        short = obf_paths(self.req(coding=CodingConfig(4, 4, 0.3)), ids)
        long = obf_paths(self.req(coding=CodingConfig(10, 4, 0.3)), ids)
        np.testing.assert_allclose(10 * long["rate"] - 6 * np.log2(1 + long["final_snr"]),
                                   4 * short["rate"], rtol=1e-12)

    def test_rate_below_jensen_bound(self):
        cc = CodingConfig(100, 50, 0.2)
        sp = SystemParams(6, 1.0)
        res = simulate_obf(SimRequest(Scheme.OBF, sp, 20_000, 2, coding=cc))
        assert res.rate.value <= an.rate_obf_bound(sp.m_elements, cc, sp) * (1 + 1e-9) + 3 * res.rate.std_error

    def test_larger_tau_raises_final_snr(self):
        a = simulate_obf(self.req(coding=CodingConfig(60, 10, 0.3))).mean_snr.value
        b = simulate_obf(self.req(coding=CodingConfig(60, 50, 0.3))).mean_snr.value
        assert b > a


class TestTd:
    def test_n1_is_random(self):
        sp = SystemParams(4, 1.0)
        a = simulate_td(SimRequest(Scheme.TD, sp, 30_000, 2, selection=SelectionConfig(1, 4)))
        b = simulate_random(SimRequest(Scheme.RANDOM, sp, 30_000, 2))
        assert a.outage == b.outage and a.rate == b.rate

    @pytest.mark.parametrize("n,m,p", [(2, 3, 1.0), (4, 2, 0.3), (3, 4, 0.1)])
    def test_matches_power_law(self, n, m, p):
        sp, sel = SystemParams(n * m, p), SelectionConfig(n, m)
        res = simulate_td(SimRequest(Scheme.TD, sp, 400_000, 12, selection=sel))
        assert agrees(res.outage, an.outage_td(1.0, sel, sp))
        assert agrees(res.rate, an.rate_td(sel, sp))
        assert res.feedback_bits.value == math.ceil(math.log2(n))

    def test_dominates_random_at_equal_active_elements(self):
        # paired per trial: the selected sub-surface beats the first one
        sel, sp = SelectionConfig(3, 2), SystemParams(6, 1.0)
        ids = np.arange(50_000)
        h, g = ch.draw_channels(sp, 4, ids)
        c = (h * g).reshape(-1, 3, 2)
        snr = ch.gains(c, ch.random_phases(4, ids, 24, 6).reshape(c.shape))
        assert np.all(snr.max(axis=1) >= snr[:, 0])
        td = simulate_td(SimRequest(Scheme.TD, sp, 50_000, 4, selection=sel)).mean_snr.value
        assert td > np.mean(snr[:, 0])


class TestAtd:
    def test_psi_equal_rho_is_td(self):
        sp = SystemParams(8, 0.5)
        a = simulate_atd(SimRequest(Scheme.ATD, sp, 200_000, 5, selection=SelectionConfig(4, 2, 1.0)))
        b = simulate_td(SimRequest(Scheme.TD, sp, 200_000, 5, selection=SelectionConfig(4, 2)))
        # same channels: the outage events coincide exactly
        assert a.outage.value == b.outage.value

    def test_infinite_threshold_is_random(self):
        sp, sub = SystemParams(8, 1.0), SystemParams(2, 1.0)
        res = simulate_atd(SimRequest(Scheme.ATD, sp, 300_000, 6, selection=SelectionConfig(4, 2, 1e9)))
        assert agrees(res.outage, an.outage_random(1.0, sub))
        assert res.feedback_bits.value == 3.0

    @pytest.mark.parametrize("psi,rho", [(1.1, 1.0), (0.9, 1.0), (1.0, 1.0)])
    def test_outage_matches_closed_form(self, psi, rho):
        sel, sp = SelectionConfig(3, 4, psi), SystemParams(12, 0.1)
        res = simulate_atd(SimRequest(Scheme.ATD, sp, 400_000, 13, rho=rho, selection=sel))
        assert agrees(res.outage, an.outage_atd(rho, sel, sp))

    def test_rate_matches_closed_form(self):
        sel, sp = SelectionConfig(3, 4, 1.1), SystemParams(12, 0.1)
        res = simulate_atd(SimRequest(Scheme.ATD, sp, 400_000, 13, selection=sel))
        assert agrees(res.rate, an.rate_atd(sel, sp))

    def test_bits_match_sequential_count(self):
        sel, sp = SelectionConfig(4, 6, 1.1), SystemParams(24, 0.1)
        res = simulate_atd(SimRequest(Scheme.ATD, sp, 400_000, 14, selection=sel))
        assert agrees(res.feedback_bits, an.atd_feedback_bits_sequential(1.1, sel, sp))

    @pytest.mark.xfail(strict=True, reason="1 + (N-2) Pi exceeds the sequential count by "
                       "Pi (1 - Pi) at N = 4")
    def test_bits_match_closed_form(self):
        sel, sp = SelectionConfig(4, 6, 1.1), SystemParams(24, 0.1)
        res = simulate_atd(SimRequest(Scheme.ATD, sp, 400_000, 14, selection=sel))
        assert agrees(res.feedback_bits, an.atd_feedback_bits(1.1, sel, sp))


class TestCt:
    @pytest.mark.parametrize("m", [1, 2, 4, 10])
    @pytest.mark.parametrize("e", [0.0, 0.3])
    def test_matches_gil_pelaez(self, m, e):
        # P chosen so the outage is moderate for every M
        sp = SystemParams(m, 2.0 / m ** 2)
        res = simulate_ct(SimRequest(Scheme.CT, sp, 300_000, 15, sigma_e_sq=e))
        assert agrees(res.outage, an.outage_ct(1.0, sp, e))
        assert agrees(res.rate, an.rate_ct(sp, e))

    def test_single_element_perfect_csi_is_random(self):
        sp = SystemParams(1, 1.0)
        res = simulate_ct(SimRequest(Scheme.CT, sp, 300_000, 16, sigma_e_sq=0.0))
        assert agrees(res.outage, an.outage_random(1.0, sp))

    def test_outage_nondecreasing_in_error(self):
        sp = SystemParams(4, 0.2)
        vals = [simulate_ct(SimRequest(Scheme.CT, sp, 100_000, 17, sigma_e_sq=e)).outage.value
                for e in (0.0, 0.2, 0.5, 0.8)]
        assert all(a <= b for a, b in zip(vals, vals[1:]))

    def test_training_sets_error(self):
        sp = SystemParams(4, 1.0)
        req = SimRequest(Scheme.CT, sp, 10, 1, coding=CodingConfig(10, 4), training_power=2.0)
        assert req.ct_error_variance() == pytest.approx(1.0 / (1.0 + 4 * 2.0 / 4))

    def test_beamforming_mean(self):
        sp = SystemParams(2, 1.0)
        res = simulate_ct(SimRequest(Scheme.CT, sp, 400_000, 18, sigma_e_sq=0.0))
        assert agrees(res.mean_snr, an.expected_bf_snr(sp))
