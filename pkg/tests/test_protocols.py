import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

import qstatwork as qw
from qstatwork.errors import DegenerateHamiltonianError, DomainError, InvalidVariantError
from qstatwork.protocols import coupling_area

from oracles import phase_quad


def fig2_params(N=2, delta=0.0):
    e0 = math.hypot(1.0, delta)
    eh = math.hypot(2.0, delta)
    return qw.EngineParams(N=N, Omega0=1.0, Delta=delta, v=0.1, T=20.0,
                           beta_c=2.0 / e0, beta_h=0.25 / eh)


class TestOmegaOfT:
    def test_initial_value(self):
        # v = -0.1 Omega(0)^2, T = 20/Omega(0) in the dimensionless units
        p = fig2_params()
        assert qw.omega_of_t(p, 0.0) == 1.0

    def test_continuity_at_half(self):
        p = fig2_params()
        left = qw.omega_of_t(p, 10.0 - 1e-9)
        right = qw.omega_of_t(p, 10.0 + 1e-9)
        assert abs(left - right) < 1e-6
        assert abs(qw.omega_of_t(p, 10.0) - 2.0) < 1e-12

    def test_cycle_closure(self):
        p = fig2_params()
        assert abs(qw.omega_of_t(p, 20.0) - 1.0) < 1e-12

    def test_domain_error(self):
        with pytest.raises(DomainError):
            qw.omega_of_t(fig2_params(), 21.0)

    def test_exactly_linear_within_stroke(self):
        p = fig2_params()
        t = np.linspace(0.5, 9.5, 101)
        om = qw.omega_of_t(p, t)
        second = np.diff(om, 2)
        assert np.max(np.abs(second)) < 1e-13

    def test_decreasing_direction(self):
        p = qw.EngineParams(N=1, Omega0=3.0, Delta=0.0, v=0.1, T=20.0,
                            beta_c=1.0, beta_h=0.1, gap_direction="decreasing")
        assert abs(qw.omega_of_t(p, 10.0) - 2.0) < 1e-12
        assert abs(qw.omega_of_t(p, 20.0) - 3.0) < 1e-12

    def test_gap_closing_rejected(self):
        with pytest.raises(DegenerateHamiltonianError):
            qw.EngineParams(N=1, Omega0=0.5, Delta=0.0, v=0.1, T=20.0,
                            beta_c=1.0, beta_h=0.1, gap_direction="decreasing")

    def test_bath_ordering_enforced(self):
        with pytest.raises(ValueError, match="beta_c > beta_h"):
            qw.EngineParams(N=1, Omega0=1.0, Delta=0.0, v=0.1, T=20.0,
                            beta_c=0.1, beta_h=1.0)


class TestPhaseIntegral:
    @pytest.mark.parametrize("delta", [0.0, 0.5, 2.0])
    def test_matches_quadrature(self, delta):
        p = fig2_params(delta=delta)
        for t0, t in ((0.0, 3.7), (0.0, 10.0), (10.0, 16.2)):
            closed = qw.phase_integral(p, t, t0)
            ref = phase_quad(p, t, t0)
            assert abs(closed - ref) < 1e-8 * max(1, abs(ref))

    def test_stroke_domain(self):
        with pytest.raises(DomainError):
            qw.phase_integral(fig2_params(), 12.0, 0.0)


class TestCouplingSchedules:
    def test_plateau_midpoint_value(self):
        # both tanh terms saturated mid-plateau: g_C = 2g/(delta_t T)
        T = 20.0
        s = qw.SmoothPlateau(g=0.5, delta_t=0.9, alpha=2142.0 / T, T=T)
        got = qw.g_of_t(s, T / 4)
        assert abs(got - 2 * 0.5 / (0.9 * T)) < 1e-6 * abs(got)

    def test_plateau_endpoints_off(self):
        T = 20.0
        s = qw.SmoothPlateau(g=0.5, delta_t=0.9, alpha=2142.0 / T, T=T)
        scale = 0.5 / (0.9 * T)
        assert abs(qw.g_of_t(s, 0.0)) < 1e-6 * scale
        assert abs(qw.g_of_t(s, T)) < 1e-6 * scale

    def test_plateau_delta_to_one_limit(self):
        # delta_t -> 1 and fast switching approximate twin g/T... plateaus of
        # height 2g/(delta_t T); the area per stroke stays g
        T = 20.0
        s = qw.SmoothPlateau(g=0.2, delta_t=0.99, alpha=4000.0 / T, T=T)
        tt = np.linspace(0.0, T / 2, 4001)
        trap = getattr(np, "trapezoid", None) or np.trapz
        area = trap([qw.g_of_t(s, float(t)) for t in tt], tt)
        assert abs(area - 0.2) < 1e-3 * 0.2

    def test_total_area_two_plateaus(self):
        T = 20.0
        for (g, dt_, a) in ((0.01, 0.9, 2142.0), (0.5, 0.9, 2142.0), (0.5, 0.98, 2000.0)):
            s = qw.SmoothPlateau(g=g, delta_t=dt_, alpha=a / T, T=T)
            val, _ = quad(lambda t: qw.g_of_t(s, t), 0.0, T, limit=400,
                          points=list(s.switch_times()))
            assert abs(val - 2 * g) < 1e-3 * 2 * g

    def test_endpoint_invariant_violation(self):
        with pytest.raises(ValueError, match="switch off"):
            qw.SmoothPlateau(g=0.5, delta_t=0.9, alpha=5.0 / 20.0, T=20.0)

    def test_midcycle_tail_negligible_for_standard_presets(self):
        # the endpoint invariant pins both switching distances, which for the
        # twin-plateau family also bounds the tail at the reset instant
        T = 20.0
        for (g, dt_, a) in ((0.01, 0.9, 2142.0), (0.5, 0.9, 2142.0), (0.5, 0.98, 2000.0)):
            s = qw.SmoothPlateau(g=g, delta_t=dt_, alpha=a / T, T=T)
            assert s.midcycle_tail_fraction() < 1e-3

    def test_impulse_has_no_pointwise_value(self):
        s = qw.Impulse(g=0.01, t1=3.5, T=20.0)
        with pytest.raises(InvalidVariantError):
            qw.g_of_t(s, 3.5)

    def test_impulse_validation(self):
        with pytest.raises(ValueError):
            qw.Impulse(g=0.01, t1=10.0, T=20.0)
        with pytest.raises(ValueError):
            qw.Impulse(g=0.01, t1=25.0, T=20.0)

    def test_sampled_interpolation_and_area(self):
        tt = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
        vv = np.array([0.0, 1.0, 0.5, 1.0, 0.0])
        s = qw.Sampled(times=tt, values=vv)
        assert qw.g_of_t(s, 0.5) == pytest.approx(0.5)
        assert qw.g_of_t(s, 2.5) == pytest.approx(0.75)
        trap = getattr(np, 'trapezoid', None) or np.trapz
        assert coupling_area(s) == pytest.approx(trap(vv, tt))


class TestHarmonicSystem:
    def test_two_level_truncation(self):
        sys2 = qw.harmonic_system(1.0, 2)
        np.testing.assert_allclose(sys2.matrix, [[0, 1], [1, 0]], atol=1e-15)

    def test_ladder_recursion(self):
        sys_ = qw.harmonic_system(0.7, 9)
        for i in range(1, 9):
            assert sys_.matrix[i, i - 1] == pytest.approx(math.sqrt(i))
        np.testing.assert_allclose(sys_.energies, 0.7 * np.arange(9), atol=1e-15)

    def test_interaction_picture_matrix_element(self):
        # <i| e^{iHt} V e^{-iHt} |0> = e^{i omega t} delta_{i,1}
        omega, t = 0.35, 2.2
        sys_ = qw.harmonic_system(omega, 6)
        phases = np.exp(1j * sys_.energies * t)
        v_int = np.diag(phases) @ sys_.matrix @ np.diag(phases.conj())
        col = v_int[:, 0]
        assert abs(col[1] - np.exp(1j * omega * t)) < 1e-12
        assert np.max(np.abs(np.delete(col, 1))) < 1e-12

    def test_dim_validation(self):
        with pytest.raises(ValueError):
            qw.harmonic_system(1.0, 1)

    def test_generic_system_validation(self):
        with pytest.raises(ValueError, match="ground-state"):
            qw.ExternalSystem(energies=np.array([0.5, 1.0]), V_S=np.eye(2))
        v = np.array([[0, 1j], [1j, 0]])
        with pytest.raises(ValueError, match="Hermitian"):
            qw.ExternalSystem(energies=np.array([0.0, 1.0]), V_S=v)
