import numpy as np
import pytest

from cavchain.controllers import (NeighborObservation, acc_accel, atc_accel,
                                  cc_accel, ccc_accel, command_accel,
                                  ctc_accel, hdm_accel, saturate, tc_accel)
from cavchain.model import (AV_POLICY, HV_POLICY, AccelLimits, ConfigError,
                            ControllerSpec, HumanGains, range_policy_eval,
                            range_policy_invert)

LIMITS = AccelLimits()  # -7 .. +3


def spec_acc(alpha=0.4, beta=0.5):
    return ControllerSpec(kind="ACC", alpha=alpha, beta=beta)


def spec_atc(alpha=0.4, beta=0.5, beta_b=0.2, n=10):
    return ControllerSpec(kind="ATC", alpha=alpha, beta=beta, beta_b=beta_b,
                          backward_links=(-n,))


class TestSaturate:
    @pytest.mark.parametrize("u,expect", [(-10.0, -7.0), (2.0, 2.0), (5.0, 3.0)])
    def test_clamp(self, u, expect):
        assert saturate(u, LIMITS) == expect


class TestHdm:
    def test_equilibrium_zero(self):
        g = HumanGains()
        h_star = range_policy_invert(HV_POLICY, 18.0)
        assert hdm_accel(g, HV_POLICY, h_star, 0.0, 18.0) == pytest.approx(0.0, abs=1e-12)

    def test_direct_substitution(self):
        # V_H(30) = 30*(1 - 0.25) = 22.5; 0.1*(22.5 - 20) = 0.25
        assert range_policy_eval(HV_POLICY, 30.0) == pytest.approx(22.5)
        g = HumanGains()
        assert hdm_accel(g, HV_POLICY, 30.0, 0.0, 20.0) == pytest.approx(0.25, abs=1e-12)

    def test_alpha_zero_reduces_to_speed_term(self):
        g = HumanGains(alpha_h=0.0, beta_h=0.6)
        rng = np.random.default_rng(0)
        for _ in range(20):
            h, hdot, v = rng.uniform(6, 50), rng.uniform(-5, 5), rng.uniform(0, 30)
            assert hdm_accel(g, HV_POLICY, h, hdot, v) == pytest.approx(0.6 * hdot)


class TestAcc:
    def test_equilibrium_zero(self):
        v = 15.0
        h = range_policy_invert(AV_POLICY, v)
        assert acc_accel(spec_acc(), AV_POLICY, h, v, v) == pytest.approx(0.0, abs=1e-12)

    def test_direct_substitution(self):
        # 0.4*(15 - 20) + 0.5*(20 - 20) = -2.0
        assert acc_accel(spec_acc(), AV_POLICY, 30.0, 20.0, 20.0) == pytest.approx(-2.0)

    def test_speed_policy_clamp(self):
        u_clamped = acc_accel(spec_acc(), AV_POLICY, 30.0, 40.0, 20.0)
        u_at_limit = acc_accel(spec_acc(), AV_POLICY, 30.0, 30.0, 20.0)
        assert u_clamped == u_at_limit


class TestCcTc:
    def test_cc_tracks_reference(self):
        spec = ControllerSpec(kind="CC", alpha=0.0, beta=0.5, v_ref=20.0,
                              forward_links=())
        assert cc_accel(spec, 18.0) == pytest.approx(1.0)
        assert cc_accel(spec, 20.0) == 0.0

    def test_tc_equilibrium_zero(self):
        spec = ControllerSpec(kind="TC", alpha=0.0, beta=0.5, beta_b=0.2,
                              v_ref=20.0, forward_links=(), backward_links=(-5,))
        assert tc_accel(spec, 20.0, [20.0], v_max=30.0) == 0.0

    def test_tc_missing_reference(self):
        spec = ControllerSpec(kind="TC", alpha=0.0, beta=0.5, beta_b=0.2,
                              forward_links=(), backward_links=(-5,))
        with pytest.raises(ConfigError):
            tc_accel(spec, 20.0, [20.0])


class TestAtc:
    def test_direct_substitution(self):
        # V(30)=15; alpha term 0, beta term 0, 0.2*(10 - 15) = -1.0
        u = atc_accel(spec_atc(), AV_POLICY, 30.0, 15.0, 15.0, 10.0)
        assert u == pytest.approx(-1.0, abs=1e-12)

    def test_equilibrium_zero(self):
        v = 15.0
        h = range_policy_invert(AV_POLICY, v)
        assert atc_accel(spec_atc(), AV_POLICY, h, v, v, v) == pytest.approx(0.0, abs=1e-12)

    def test_beta_b_zero_is_acc(self):
        rng = np.random.default_rng(1)
        s0 = spec_atc(beta_b=0.0)
        for _ in range(50):
            h, v1, v0, vb = rng.uniform(6, 50), rng.uniform(0, 35), \
                rng.uniform(0, 35), rng.uniform(0, 35)
            assert atc_accel(s0, AV_POLICY, h, v1, v0, vb) == pytest.approx(
                acc_accel(spec_acc(), AV_POLICY, h, v1, v0), abs=1e-14)

    def test_missing_backward_observation(self):
        with pytest.raises(ConfigError):
            atc_accel(spec_atc(), AV_POLICY, 30.0, 15.0, 15.0, None)


class TestSpecializationLattice:
    """Zeroing gains must collapse each law onto its special case exactly."""

    def setup_method(self):
        self.rng = np.random.default_rng(7)

    def _draw(self):
        r = self.rng
        return dict(h=r.uniform(6, 50), v0=r.uniform(0, 35),
                    fwd=list(r.uniform(0, 35, size=3)),
                    back=list(r.uniform(0, 35, size=2)))

    def test_ctc_to_ccc(self):
        ccc = ControllerSpec(kind="CCC", alpha=0.4, beta=(0.5, 0.2, 0.1),
                             forward_links=(1, 2, 3))
        ctc = ControllerSpec(kind="CTC", alpha=0.4, beta=(0.5, 0.2, 0.1),
                             beta_b=(0.0, 0.0), forward_links=(1, 2, 3),
                             backward_links=(-1, -2))
        for _ in range(25):
            d = self._draw()
            assert ctc_accel(ctc, AV_POLICY, d["h"], d["v0"], d["fwd"], d["back"]) \
                == pytest.approx(ccc_accel(ccc, AV_POLICY, d["h"], d["v0"], d["fwd"]),
                                 abs=1e-14)

    def test_atc_to_acc(self):
        for _ in range(25):
            d = self._draw()
            assert atc_accel(spec_atc(beta_b=0.0), AV_POLICY, d["h"], d["fwd"][0],
                             d["v0"], d["back"][0]) == pytest.approx(
                acc_accel(spec_acc(), AV_POLICY, d["h"], d["fwd"][0], d["v0"]),
                abs=1e-14)

    def test_tc_to_cc(self):
        tc = ControllerSpec(kind="TC", alpha=0.0, beta=0.5, beta_b=(0.0, 0.0),
                            v_ref=20.0, forward_links=(), backward_links=(-1, -2))
        cc = ControllerSpec(kind="CC", alpha=0.0, beta=0.5, v_ref=20.0,
                            forward_links=())
        for _ in range(25):
            d = self._draw()
            assert tc_accel(tc, d["v0"], d["back"], v_max=30.0) == pytest.approx(
                cc_accel(cc, d["v0"]), abs=1e-14)

    def test_ctc_to_atc(self):
        # only the nearest forward speed link and the farthest backward link
        ctc = ControllerSpec(kind="CTC", alpha=0.4, beta=(0.5, 0.0, 0.0),
                             beta_b=(0.2, 0.0), forward_links=(1, 2, 3),
                             backward_links=(-10, -3))
        atc = spec_atc()
        for _ in range(25):
            d = self._draw()
            assert ctc_accel(ctc, AV_POLICY, d["h"], d["v0"], d["fwd"], d["back"]) \
                == pytest.approx(atc_accel(atc, AV_POLICY, d["h"], d["fwd"][0],
                                           d["v0"], d["back"][0]), abs=1e-14)

    def test_ccc_to_acc(self):
        ccc = ControllerSpec(kind="CCC", alpha=0.4, beta=(0.5, 0.0, 0.0),
                             forward_links=(1, 2, 3))
        for _ in range(25):
            d = self._draw()
            assert ccc_accel(ccc, AV_POLICY, d["h"], d["v0"], d["fwd"]) \
                == pytest.approx(acc_accel(spec_acc(), AV_POLICY, d["h"],
                                           d["fwd"][0], d["v0"]), abs=1e-14)


class TestAffinity:
    """Each law is affine in every observed speed: three collinear samples."""

    @pytest.mark.parametrize("vs", [(0.0, 5.0, 10.0), (12.0, 17.0, 22.0)])
    def test_acc_affine_in_front_speed(self, vs):
        u = [acc_accel(spec_acc(), AV_POLICY, 30.0, v, 15.0) for v in vs]
        assert u[1] - u[0] == pytest.approx(u[2] - u[1], abs=1e-12)

    def test_atc_affine_in_back_speed(self):
        vs = (2.0, 9.0, 16.0)
        u = [atc_accel(spec_atc(), AV_POLICY, 30.0, 15.0, 15.0, v) for v in vs]
        assert u[1] - u[0] == pytest.approx(u[2] - u[1], abs=1e-12)

    def test_hdm_affine_in_self_speed(self):
        vs = (5.0, 10.0, 15.0)
        u = [hdm_accel(HumanGains(), HV_POLICY, 30.0, 1.0, v) for v in vs]
        assert u[1] - u[0] == pytest.approx(u[2] - u[1], abs=1e-12)


class TestDispatch:
    def test_hdm_dispatch(self):
        g = HumanGains()
        obs = [NeighborObservation(index=1, speed=22.0, headway=30.0)]
        assert command_accel(g, HV_POLICY, obs, 20.0) == pytest.approx(
            hdm_accel(g, HV_POLICY, 30.0, 2.0, 20.0))

    def test_atc_dispatch(self):
        spec = spec_atc()
        obs = [NeighborObservation(index=1, speed=15.0, headway=30.0),
               NeighborObservation(index=-10, speed=10.0)]
        assert command_accel(spec, AV_POLICY, obs, 15.0) == pytest.approx(-1.0)
