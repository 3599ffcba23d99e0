import cmath
import math
from dataclasses import replace

import numpy as np
import pytest

from cavchain.freqdomain import (HeadToTailConfig, HumanLink, config_acc,
                                 config_atc, config_hv_chain, head_to_tail)
from cavchain.stability import (INDETERMINATE, PLANT_UNSTABLE,
                                STRING_STABLE, STRING_UNSTABLE, Rect,
                                atc_plant_boundaries, atc_string_boundaries,
                                brute_force_string_stable, build_chart,
                                config_at, ego_char_fn, envelope_curve,
                                find_roots, open_ring_char_fn, p_omega,
                                p_zero, plant_verdict, ring_boundaries,
                                string_verdict, virtual_ring_char_fn,
                                winding_number)

TWO_PI = 2.0 * math.pi


# --------------------------------------------------------------------------
# closed-form boundary expressions, re-derived by hand from
# G(i*omega) = e^{-iK}, kept as oracles independent of the solver

def oracle_string_alpha_beta(om, K, GR, GI, kappa, sigma, beta_b):
    """(alpha, beta) of the omega > 0 string boundary at wavenumber K."""
    den = om * (GR * math.sin(K) + GI * math.cos(K)) \
        - kappa * (1 + GR**2 + GI**2 - 2 * GR * math.cos(K) + 2 * GI * math.sin(K))
    alpha = (om**2 * (GI * math.sin(om * sigma - K) + GR * math.cos(om * sigma - K)
                      - math.cos(om * sigma))
             + beta_b * om * ((GR**2 + GI**2) * math.sin(K) - GR * math.sin(K)
                              + GI * (1 - math.cos(K)))) / den
    beta = (om**2 * math.cos(om * sigma)
            - kappa * om * (GI * math.cos(om * sigma - K)
                            - GR * math.sin(om * sigma - K) + math.sin(om * sigma))
            + beta_b * (-om * GI + kappa * (1 + (GR**2 + GI**2) * math.cos(K)
                                            - GR * (1 + math.cos(K))
                                            + GI * math.sin(K)))) / den
    return alpha, beta


def oracle_hv_ring(om, k, n_vehicles, kappa_h, tau):
    """Homogeneous-ring boundary via K = 2*k*pi/(N+1) substitution into the
    human string-boundary closed form."""
    K = 2.0 * k * math.pi / n_vehicles
    den = om * math.sin(K) - 2.0 * kappa_h * (1.0 - math.cos(K))
    alpha = om**2 * (math.cos(om * tau - K) - math.cos(om * tau)) / den
    beta = (om**2 * math.cos(om * tau)
            + kappa_h * om * (math.sin(om * tau - K) - math.sin(om * tau))) / den
    return alpha, beta


def oracle_p_zero(alpha, beta, kappa, beta_b, n, h: HumanLink):
    inner = alpha + 2 * beta - 2 * kappa
    if n:
        inner += n * alpha * kappa**2 / (h.alpha_h * h.kappa_h**2) \
            * (h.alpha_h + 2 * h.beta_h - 2 * h.kappa_h)
        inner -= 2 * n * (kappa / h.kappa_h) * beta_b
    return alpha * inner


class TestPOmega:
    def test_acc_n0_small_omega_limit(self):
        cfg = config_acc(0)
        # P extends continuously to alpha*(alpha + 2 beta - 2 kappa) = 0.08
        assert p_omega(cfg, 1e-5) == pytest.approx(0.08, abs=1e-6)

    def test_sign_matches_head_to_tail_magnitude(self):
        rng = np.random.default_rng(31)
        for _ in range(60):
            cfg = config_atc(int(rng.integers(1, 6)),
                             alpha=rng.uniform(0.05, 1.0),
                             beta=rng.uniform(0.0, 1.0),
                             beta_b=rng.uniform(0.0, 0.5))
            om = rng.uniform(0.01, TWO_PI)
            p = p_omega(cfg, om)
            g = abs(head_to_tail(cfg, 1j * om))
            assert (p > 0) == (g < 1), (cfg, om, p, g)

    def test_positive_omega_required(self):
        with pytest.raises(Exception):
            p_omega(config_acc(0), 0.0)

    def test_vanishes_on_string_boundary_points(self):
        cfg = config_atc(3)
        curves = atc_string_boundaries(cfg, ("beta", "alpha"),
                                       omega_grid=np.linspace(0.2, 2.0, 10),
                                       k_grid=np.array([1.0, 2.5]))
        n_checked = 0
        for c in curves:
            if c.kind != "string-K":
                continue
            for (b, a), om in zip(c.points, c.samples):
                trial = replace(cfg, alpha=float(a), beta=float(b))
                assert abs(p_omega(trial, float(om))) < 1e-8
                n_checked += 1
        assert n_checked >= 15


class TestPZero:
    def test_n0_closed_form(self):
        cfg = config_acc(0, alpha=0.3, beta=0.7, kappa=0.5)
        assert p_zero(cfg) == pytest.approx(0.3 * (0.3 + 1.4 - 1.0), abs=1e-15)

    def test_alpha_zero(self):
        assert p_zero(config_atc(4, alpha=0.0)) == 0.0

    def test_matches_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(40):
            n = int(rng.integers(0, 8))
            a, b = rng.uniform(0.01, 1.0), rng.uniform(0.0, 1.0)
            bb = rng.uniform(0.0, 0.5) if n else 0.0
            h = HumanLink(kappa_h=rng.uniform(0.4, 1.0))
            cfg = (config_atc(n, alpha=a, beta=b, beta_b=bb, human=h) if n
                   else config_acc(0, alpha=a, beta=b))
            assert p_zero(cfg) == pytest.approx(
                oracle_p_zero(a, b, 0.6, bb, n, h), rel=1e-12)

    def test_matches_richardson_limit(self):
        # P is even in omega; two Richardson stages kill the h^2 and h^4 terms
        for cfg in (config_acc(0), config_atc(5), config_atc(3, alpha=0.7, beta=0.1)):
            P = lambda w: p_omega(cfg, w)
            h = 1e-2
            r1a = (4 * P(h / 2) - P(h)) / 3
            r1b = (4 * P(h / 4) - P(h / 2)) / 3
            r2 = (16 * r1b - r1a) / 15
            assert p_zero(cfg) == pytest.approx(r2, abs=1e-6)


class TestFindRoots:
    def test_zero_delay_quadratic_oracle(self):
        rng = np.random.default_rng(50)
        for _ in range(50):
            alpha = rng.uniform(0.05, 1.0)
            beta = rng.uniform(0.05, 1.0)
            kappa = rng.uniform(0.3, 1.0)
            cfg = HeadToTailConfig(kind="ACC", alpha=alpha, beta=beta,
                                   kappa=kappa, delay=0.0)
            res = find_roots(ego_char_fn(cfg), Rect(-3.0, 1.0, -TWO_PI, TWO_PI))
            assert res.converged
            b, c = alpha + beta, alpha * kappa
            disc = cmath.sqrt(complex(b * b - 4.0 * c))
            expect = sorted([(-b + disc) / 2.0, (-b - disc) / 2.0],
                            key=lambda z: (z.real, z.imag))
            got = sorted(res.roots, key=lambda z: (z.real, z.imag))
            assert len(got) == 2
            for g, e in zip(got, expect):
                assert abs(g - e) < 1e-10

    def test_boundary_gains_root_on_imaginary_axis(self):
        cfg = config_acc(0)
        om_grid = np.array([0.8, 1.4, 2.0])
        curves = atc_plant_boundaries(cfg, ("beta", "alpha"), omega_grid=om_grid)
        c = [c for c in curves if c.kind == "plant-iomega"][0]
        for (b, a), om in zip(c.points, c.samples):
            trial = replace(cfg, alpha=float(a), beta=float(b))
            res = find_roots(ego_char_fn(trial),
                             Rect(-0.2, 0.2, om - 0.3, om + 0.3))
            assert res.converged and len(res.roots) == 1
            assert abs(res.roots[0] - 1j * om) < 1e-6

    def test_ring_char_root_at_origin(self):
        cfg = config_acc(2)
        res = find_roots(open_ring_char_fn(cfg), Rect(-0.1, 0.1, -0.1, 0.1))
        assert any(abs(r) < 1e-8 for r in res.roots)

    def test_winding_number_simple(self):
        poly = lambda s: (s - (0.2 + 0.3j)) * (s + 1.0 - 0.5j)
        assert winding_number(poly, Rect(-2, 2, -2, 2)) == 2
        assert winding_number(poly, Rect(0, 2, 0, 2)) == 1
        assert winding_number(poly, Rect(1, 2, 1, 2)) == 0


class TestPlantVerdict:
    def test_default_acc_point_stable(self):
        stable, rightmost, _ = plant_verdict(config_acc(0))
        assert stable
        assert rightmost.real == pytest.approx(-0.4173, abs=1e-3)

    def test_negative_alpha_unstable_through_origin(self):
        cfg = HeadToTailConfig(kind="ACC", alpha=-0.1, beta=0.5, kappa=0.6,
                               delay=0.6)
        stable, rightmost, _ = plant_verdict(cfg)
        assert not stable
        assert rightmost.real > 0.0 and abs(rightmost.imag) < 1e-9

    def test_large_beta_unstable_complex_pair(self):
        cfg = config_acc(0, beta=4.0)
        stable, rightmost, _ = plant_verdict(cfg)
        assert not stable
        assert rightmost.real > 0.0 and rightmost.imag > 0.5

    def test_atc_decomposition_sees_ring_instability(self):
        # weak forward gains plus a strong backward gain over an aggressive
        # human chain: the ego subsystem alone is stable but the virtual
        # ring loop is not, so the decomposition must flag it
        cfg = config_atc(10, alpha=0.12, beta=0.02, beta_b=0.55,
                         human=HumanLink(kappa_h=0.95))
        ego_ok = find_roots(ego_char_fn(cfg), Rect(0.0, 3.0, -TWO_PI, TWO_PI))
        ring = find_roots(virtual_ring_char_fn(cfg), Rect(0.0, 3.0, -TWO_PI, TWO_PI))
        assert ego_ok.converged and not ego_ok.roots
        assert ring.roots
        stable, _, _ = plant_verdict(cfg)
        assert not stable


class TestStringVerdict:
    def test_single_human_link_unstable(self):
        v = string_verdict(config_hv_chain(1))
        assert not v.string_stable
        assert v.p_zero < 0.0

    def test_acc_n0_matches_brute_force(self):
        rng = np.random.default_rng(77)
        mismatches = 0
        for _ in range(40):
            cfg = config_acc(0, alpha=rng.uniform(0.05, 1.5),
                             beta=rng.uniform(0.0, 1.5))
            if string_verdict(cfg).string_stable != brute_force_string_stable(cfg):
                mismatches += 1
        assert mismatches == 0

    def test_plant_failure_forces_string_failure(self):
        cfg = config_acc(0, beta=4.0)
        v = string_verdict(cfg)
        assert not v.plant_stable and not v.string_stable

    def test_implication_invariant(self):
        rng = np.random.default_rng(123)
        for _ in range(30):
            cfg = config_atc(int(rng.integers(1, 5)),
                             alpha=rng.uniform(0.0, 1.2),
                             beta=rng.uniform(0.0, 1.2),
                             beta_b=rng.uniform(0.0, 0.6))
            v = string_verdict(cfg)
            assert (not v.string_stable) or v.plant_stable

    def test_worst_margin_sign(self):
        v = string_verdict(config_acc(0))       # bundled point: string stable
        assert v.string_stable and v.worst_margin > 0.0
        v = string_verdict(config_atc(10))      # bundled ATC at N=10: not
        assert not v.string_stable and v.worst_margin < 0.0


class TestPlantBoundaries:
    def test_beta_b_zero_reduces_to_acc_form(self):
        om = np.linspace(0.1, 2.0, 10)
        curves = atc_plant_boundaries(config_atc(3, beta_b=0.0),
                                      ("beta", "alpha"), omega_grid=om)
        c = [c for c in curves if c.kind == "plant-iomega"][0]
        alpha = om**2 * np.cos(om * 0.6) / 0.6
        beta = om * np.sin(om * 0.6) - alpha
        assert np.allclose(c.points[:, 1], alpha, atol=1e-14)
        assert np.allclose(c.points[:, 0], beta, atol=1e-14)

    def test_quarter_period_point(self):
        om_star = math.pi / (2 * 0.6)
        curves = atc_plant_boundaries(config_acc(0), ("beta", "alpha"),
                                      omega_grid=np.array([om_star]))
        c = [c for c in curves if c.kind == "plant-iomega"][0]
        assert c.points[0, 0] == pytest.approx(om_star, abs=1e-9)  # beta = Omega
        assert abs(c.points[0, 1]) < 1e-12                          # alpha = 0

    def test_characteristic_residuals(self):
        cfg = config_atc(4)
        curves = atc_plant_boundaries(cfg, ("beta", "alpha"),
                                      omega_grid=np.linspace(0.05, 2.5, 40))
        for c in curves:
            if c.kind == "plant-s0":
                continue
            for (b, a), om in zip(c.points, c.samples):
                trial = replace(cfg, alpha=float(a), beta=float(b))
                if c.kind == "plant-iomega":
                    val = abs(complex(ego_char_fn(trial)(1j * om)))
                else:
                    scale = abs(np.prod([h.denominator(1j * om)
                                         for h in trial.humans]))
                    val = abs(complex(virtual_ring_char_fn(trial)(1j * om))) / scale
                assert val < 1e-8

    def test_beta_betab_plane_line_and_ring(self):
        cfg = config_atc(4, alpha=0.1)
        curves = atc_plant_boundaries(cfg, ("beta", "beta_b"),
                                      omega_grid=np.linspace(0.05, 2.5, 200))
        kinds = {c.kind for c in curves}
        assert "plant-iomega" in kinds and "plant-ring" in kinds
        ring = [c for c in curves if c.kind == "plant-ring"][0]
        for (b, bb), om in list(zip(ring.points, ring.samples))[::20]:
            trial = replace(cfg, beta=float(b), beta_b=float(bb))
            scale = abs(np.prod([h.denominator(1j * om) for h in trial.humans]))
            assert abs(complex(virtual_ring_char_fn(trial)(1j * om))) / scale < 1e-8


class TestStringBoundaries:
    def test_omega0_line_acc_n0(self):
        curves = atc_string_boundaries(config_acc(0), ("beta", "alpha"),
                                       k_grid=np.array([1.0]),
                                       beta_range=(0.0, 1.0))
        lines = [c for c in curves if c.kind == "string-omega0"]
        nontrivial = lines[1]
        b = nontrivial.points[:, 0]
        assert np.array_equal(nontrivial.points[:, 1], 2.0 * (0.6 - b))
        # at beta = 0.5 the line sits at alpha = 0.2
        assert 2.0 * (0.6 - 0.5) == pytest.approx(0.2)

    def test_every_point_on_unit_magnitude(self):
        cfg = config_atc(4)
        curves = atc_string_boundaries(cfg, ("beta", "alpha"),
                                       omega_grid=np.linspace(0.1, 2.5, 25),
                                       k_grid=np.linspace(0.4, 5.8, 7))
        checked = 0
        for c in curves:
            if c.kind != "string-K":
                continue
            for (b, a), om in zip(c.points, c.samples):
                trial = replace(cfg, alpha=float(a), beta=float(b))
                assert abs(abs(head_to_tail(trial, 1j * float(om))) - 1.0) < 1e-8
                checked += 1
        assert checked > 100

    def test_matches_hand_derived_closed_forms(self):
        cfg = config_atc(4)
        om = np.linspace(0.2, 2.0, 15)
        gam = cfg.gamma(1j * om)
        for K in (0.7, 2.0, 4.5):
            curves = atc_string_boundaries(cfg, ("beta", "alpha"),
                                           omega_grid=om, k_grid=np.array([K]))
            c = [c for c in curves if c.kind == "string-K"][0]
            for (b, a), omv, g in zip(c.points, c.samples, gam):
                ao, bo = oracle_string_alpha_beta(float(omv), K, g.real, g.imag,
                                                  0.6, 0.6, 0.2)
                assert a == pytest.approx(ao, abs=1e-10)
                assert b == pytest.approx(bo, abs=1e-10)

    def test_n0_reduces_to_gamma_free_forms(self):
        # with Gamma = 1 the boundary collapses to the N = 0 closed form
        cfg = config_acc(0)
        om = np.linspace(0.3, 2.0, 10)
        K = 1.3
        curves = atc_string_boundaries(cfg, ("beta", "alpha"), omega_grid=om,
                                       k_grid=np.array([K]))
        c = [c for c in curves if c.kind == "string-K"][0]
        den = om * math.sin(K) - 2 * 0.6 * (1 - math.cos(K))
        alpha = om**2 * (np.cos(om * 0.6 - K) - np.cos(om * 0.6)) / den
        beta = (om**2 * np.cos(om * 0.6)
                + 0.6 * om * (np.sin(om * 0.6 - K) - np.sin(om * 0.6))) / den
        assert np.allclose(c.points[:, 1], alpha, atol=1e-10)
        assert np.allclose(c.points[:, 0], beta, atol=1e-10)

    def test_beta_betab_plane_points_on_unit_magnitude(self):
        cfg = config_atc(3, alpha=0.1)
        curves = atc_string_boundaries(cfg, ("beta", "beta_b"),
                                       omega_grid=np.linspace(0.1, 2.0, 15),
                                       k_grid=np.array([1.0, 3.0]))
        checked = 0
        for c in curves:
            if c.kind != "string-K":
                continue
            for (b, bb), om in zip(c.points, c.samples):
                trial = replace(cfg, beta=float(b), beta_b=float(bb))
                assert abs(abs(head_to_tail(trial, 1j * float(om))) - 1.0) < 1e-8
                checked += 1
        assert checked > 20

    def test_hv_relabeling_identity(self):
        # HV boundaries are the ACC boundaries under the parameter relabeling
        hv = HeadToTailConfig(kind="HV", alpha=0.1, beta=0.6, kappa=0.7,
                              delay=0.8)
        acc = HeadToTailConfig(kind="ACC", alpha=0.1, beta=0.6, kappa=0.7,
                               delay=0.8)
        om = np.linspace(0.2, 1.5, 8)
        for K in (0.9, 3.1):
            ch = atc_string_boundaries(hv, ("beta", "alpha"), omega_grid=om,
                                       k_grid=np.array([K]))
            ca = atc_string_boundaries(acc, ("beta", "alpha"), omega_grid=om,
                                       k_grid=np.array([K]))
            ph = [c for c in ch if c.kind == "string-K"][0].points
            pa = [c for c in ca if c.kind == "string-K"][0].points
            assert np.allclose(ph, pa, atol=1e-14)

    def test_envelope_is_family_minimum(self):
        cfg = config_acc(0)
        curves = atc_string_boundaries(cfg, ("beta", "alpha"),
                                       k_grid=np.linspace(0.2, 6.0, 60))
        env = envelope_curve(curves, (0.0, 1.0), n_bins=50)
        assert env is not None and env.kind == "string-envelope"
        fam = np.vstack([c.points for c in curves if c.kind == "string-K"])
        for x, y in env.points[::7]:
            near = fam[np.abs(fam[:, 0] - x) < 0.02]
            near = near[near[:, 1] > 0]
            if len(near):
                assert y <= near[:, 1].min() + 0.05


class TestGammaLimits:
    """L'Hospital limits of the human-chain response at omega -> 0."""

    @pytest.mark.parametrize("n", [1, 3, 7])
    def test_imaginary_part_slope(self, n):
        cfg = config_hv_chain(n + 1)
        h = cfg.human
        om = np.array([1e-3, 5e-4, 2.5e-4])
        vals = np.imag(cfg.gamma(1j * om)) / om
        # Richardson on the even error expansion
        r = (4 * vals[1] - vals[0]) / 3
        r = (16 * ((4 * vals[2] - vals[1]) / 3) - r) / 15
        assert r == pytest.approx(-n / h.kappa_h, rel=1e-6)

    @pytest.mark.parametrize("n", [1, 3, 7])
    def test_real_part_curvature(self, n):
        cfg = config_hv_chain(n + 1)
        h = cfg.human
        om = np.array([1e-2, 5e-3, 2.5e-3])
        vals = (np.real(cfg.gamma(1j * om)) - 1.0) / om**2
        r = (4 * vals[1] - vals[0]) / 3
        r = (16 * ((4 * vals[2] - vals[1]) / 3) - r) / 15
        expect = n * (2 * h.kappa_h - 2 * h.beta_h - (n + 1) * h.alpha_h) \
            / (2 * h.alpha_h * h.kappa_h**2)
        # at n=1 the bundled parameters put the limit exactly at zero
        assert r == pytest.approx(expect, rel=1e-4, abs=1e-6)


class TestRingBoundaries:
    @pytest.mark.parametrize("n", [3, 7])
    def test_matches_k_substituted_string_form(self, n):
        link = HumanLink()
        cfg = HeadToTailConfig(kind="HV", alpha=link.alpha_h, beta=link.beta_h,
                               kappa=link.kappa_h, delay=link.tau,
                               humans=(link,) * n)
        curves = ring_boundaries(cfg, omega_grid=np.linspace(0.1, 2.0, 20))
        assert {c.k_index for c in curves} == set(range(1, n + 1))
        for c in curves:
            for (b, a), om in zip(c.points, c.samples):
                ao, bo = oracle_hv_ring(float(om), c.k_index, n + 1,
                                        link.kappa_h, link.tau)
                assert a == pytest.approx(ao, abs=1e-10)
                assert b == pytest.approx(bo, abs=1e-10)

    def test_mixed_ring_gamma_zero_is_plant_boundary(self):
        # a ring closed through perfectly attenuating humans reduces to the
        # ego plant boundary
        from cavchain.stability import _string_linear_solve
        om = np.linspace(0.3, 2.0, 12)
        gam = np.zeros_like(om, dtype=complex)
        x, y, keep = _string_linear_solve(om, gam, 0.0, 0.6, 0.6,
                                          ("beta", "alpha"), 0.0)
        assert np.allclose(y, om**2 * np.cos(om * 0.6) / 0.6, atol=1e-12)
        assert np.allclose(x, om * np.sin(om * 0.6) - y, atol=1e-12)

    def test_ring_converges_to_string_boundary(self):
        """Set convergence of the ring boundary to the open-chain string
        boundary as the ring grows: ring points always sit on string
        wavenumber curves (so their distance to the string family stays at
        sampling level), while the discrete ring wavenumbers densify, so the
        distance from string points to the ring family must shrink."""
        link = HumanLink()
        string = atc_string_boundaries(
            HeadToTailConfig(kind="HV", alpha=link.alpha_h, beta=link.beta_h,
                             kappa=link.kappa_h, delay=link.tau),
            ("beta", "alpha"), omega_grid=np.linspace(0.02, 2.5, 150),
            k_grid=np.linspace(0.05, TWO_PI - 0.05, 160))

        def window(p):
            return p[(p[:, 0] >= 0) & (p[:, 0] <= 1.2)
                     & (p[:, 1] >= 0) & (p[:, 1] <= 1.2)]

        cloud = window(np.vstack([c.points for c in string
                                  if c.kind == "string-K"]))
        to_ring, to_string = [], []
        for n in (10, 50, 200):
            cfg = HeadToTailConfig(kind="HV", alpha=link.alpha_h,
                                   beta=link.beta_h, kappa=link.kappa_h,
                                   delay=link.tau, humans=(link,) * n)
            rings = ring_boundaries(cfg, omega_grid=np.linspace(0.02, 2.5, 150))
            pts = window(np.vstack([c.points for c in rings]))
            to_ring.append(max(np.min(np.linalg.norm(pts - q, axis=1))
                               for q in cloud[::5]))
            to_string.append(max(np.min(np.linalg.norm(cloud - p, axis=1))
                                 for p in pts[::5]))
        assert to_ring[0] > to_ring[1] > to_ring[2]
        assert to_ring[2] < 0.05
        assert max(to_string) < 0.05


class TestCharts:
    def test_classification_matches_verdicts_at_cell_centers(self):
        base = config_acc(1)
        chart = build_chart(base, ("beta", "alpha"), (0.0, 1.0), (0.0, 1.0), 10)
        rng = np.random.default_rng(4)
        for _ in range(12):
            i = int(rng.integers(0, 10))
            j = int(rng.integers(0, 10))
            cfg = config_at(base, chart.plane,
                            chart.x_centers[i], chart.y_centers[j])
            v = string_verdict(cfg)
            code = chart.classes[j, i]
            if code == INDETERMINATE:
                continue
            expect = (STRING_STABLE if v.string_stable else
                      STRING_UNSTABLE if v.plant_stable else PLANT_UNSTABLE)
            assert code == expect

    def test_paired_cells_across_omega0_line(self):
        # P(0) = alpha*(alpha + 2 beta - 2 kappa): cells below the analytic
        # line alpha = 2(kappa - beta) violate the omega -> 0 condition and
        # can never classify string stable; for betas near kappa the cell
        # just above the line is string stable (verified against |G| scans)
        base = config_acc(0)
        chart = build_chart(base, ("beta", "alpha"), (0.0, 0.6), (0.0, 0.5), 30)
        transitions = 0
        for i, b in enumerate(chart.x_centers):
            line = 2.0 * (0.6 - b)
            below = np.searchsorted(chart.y_centers, line) - 1
            if not (0 < below < len(chart.y_centers) - 1):
                continue
            if line - chart.y_centers[below] < 0.004:
                continue  # cell center essentially on the line
            assert chart.classes[below, i] != STRING_STABLE
            if chart.classes[below + 1, i] == STRING_STABLE:
                transitions += 1
        assert transitions >= 5

    def test_atc_curves_at_zero_backward_equal_acc(self):
        om = np.linspace(0.1, 2.0, 12)
        a = atc_plant_boundaries(config_acc(2), ("beta", "alpha"), omega_grid=om)
        b = atc_plant_boundaries(config_atc(2, beta_b=0.0), ("beta", "alpha"),
                                 omega_grid=om)
        pa = [c for c in a if c.kind == "plant-iomega"][0].points
        pb = [c for c in b if c.kind == "plant-iomega"][0].points
        assert np.allclose(pa, pb, atol=1e-14)

    def test_parallel_chart_matches_serial(self):
        base = config_atc(2)
        kw = dict(plane=("beta", "alpha"), x_range=(0.0, 1.0),
                  y_range=(0.0, 1.0), resolution=8, with_curves=False)
        c1 = build_chart(base, workers=1, **kw)
        c2 = build_chart(base, workers=2, **kw)
        assert np.array_equal(c1.classes, c2.classes)
