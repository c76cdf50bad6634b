import math

import numpy as np
import pytest

import qstatwork as qw
from qstatwork.dynamics import (
    CycleResult,
    PropagatorConfig,
    adiabaticity_witness,
    apply_impulse,
    default_dt_cap,
    run_cycle,
    thermal_reset,
)
from qstatwork.errors import ConfigError, PropagationError, ResourceLimitError

T = 20.0
OMEGA = 2 * math.pi * 0.05 / T


def engine(N, delta=0.0, stats=qw.Statistics.BOSE, v=0.1):
    e0 = math.hypot(1.0, delta)
    eh = math.hypot(1.0 + abs(v) * T / 2, delta)
    return qw.EngineParams(N=N, Omega0=1.0, Delta=delta, v=v, T=T,
                           beta_c=2.0 / e0, beta_h=0.25 / eh, statistics=stats)


def ho(dim=10):
    return qw.harmonic_system(OMEGA, dim)


IMPULSE = qw.Impulse(g=0.01, t1=0.35 * T / 2, T=T)


class TestDecoupledCycle:
    def test_zero_coupling_keeps_ground_state(self):
        sched = qw.Impulse(g=0.0, t1=0.35 * T / 2, T=T)
        res = run_cycle(engine(3, 0.7), sched, ho())
        assert res.work.avg_work < 1e-15
        assert all(p < 1e-14 for p in res.work.p_excite.values())
        sched2 = qw.SmoothPlateau(g=0.0, delta_t=0.9, alpha=2142.0 / T, T=T)
        res2 = run_cycle(engine(2, 0.0), sched2, ho(6))
        assert res2.work.avg_work < 1e-14


class TestApplyImpulse:
    def _state(self, N=2, dim=6, delta=0.6):
        p = engine(N, delta)
        H = qw.engine_hamiltonian(p, 0.0, qw.DickeSector(N))
        rho_e = qw.thermal_state(H, p.beta_c).rho
        rho_s = np.zeros((dim, dim), dtype=complex)
        rho_s[0, 0] = 1.0
        space = qw.Composite(qw.DickeSector(N), qw.HOTruncated(dim))
        return qw.QuantumState(space, np.kron(rho_e, rho_s)), p

    def test_zero_kick_identity(self):
        state, p = self._state()
        sx, _ = qw.collective_spin_ops(2)
        out = apply_impulse(state, 0.0, 2 * sx.matrix, ho(6).matrix)
        assert np.max(np.abs(out.rho - state.rho)) < 1e-14

    def test_second_order_excitation(self):
        # p_1 from the kick matches g^2 <V_R^2> |<1|V_S|0>|^2 to O(g^4)
        state, p = self._state(N=3, delta=0.0)
        g = 0.01
        sx, _ = qw.collective_spin_ops(3)
        out = apply_impulse(state, g, 2 * sx.matrix, ho(6).matrix)
        sigma = np.einsum("isit->st", out.rho.reshape(4, 6, 4, 6))
        p1 = float(sigma[1, 1].real)
        x = p.beta_c * float(p.energy(0.0))
        m2 = 3 * 5 / 2 - 2 * qw.moment_f(3, x)
        assert abs(p1 - g ** 2 * m2) < 10 * g ** 4 * m2 ** 2

    def test_kick_composition(self):
        state, _ = self._state()
        sx, _ = qw.collective_spin_ops(2)
        v_r, v_s = 2 * sx.matrix, ho(6).matrix
        once = apply_impulse(state, 0.3, v_r, v_s)
        twice = apply_impulse(apply_impulse(state, 0.15, v_r, v_s), 0.15, v_r, v_s)
        assert np.max(np.abs(once.rho - twice.rho)) < 1e-13


class TestThermalReset:
    def _composite(self, N=2, dim=5):
        p = engine(N, 0.4)
        H = qw.engine_hamiltonian(p, T / 2, qw.DickeSector(N))
        rho_e = qw.thermal_state(H, p.beta_h).rho
        rng = np.random.default_rng(5)
        a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        sig = a @ a.conj().T
        sig /= np.trace(sig).real
        space = qw.Composite(qw.DickeSector(N), qw.HOTruncated(dim))
        return qw.QuantumState(space, np.kron(rho_e, sig)), H, p, sig

    def test_idempotent_on_product_gibbs(self):
        state, H, p, _ = self._composite()
        out = thermal_reset(state, H, p.beta_h)
        assert np.max(np.abs(out.rho - state.rho)) < 1e-12

    def test_engine_marginal_is_gibbs(self):
        state, H, p, sig = self._composite()
        out = thermal_reset(state, H, p.beta_h)
        red_e = np.einsum("isjs->ij", out.rho.reshape(3, 5, 3, 5))
        assert np.max(np.abs(red_e - qw.thermal_state(H, p.beta_h).rho)) < 1e-12
        red_s = np.einsum("isit->st", out.rho.reshape(3, 5, 3, 5))
        assert np.max(np.abs(red_s - sig)) < 1e-12

    def test_correlator_factorizes_across_reset(self):
        # channel structure: <A R(B rho)> = <A>_gibbs <B>_rho exactly
        p = engine(3, 0.8)
        H0 = qw.engine_hamiltonian(p, 0.0, qw.DickeSector(3)).matrix
        Hh = qw.engine_hamiltonian(p, T / 2, qw.DickeSector(3))
        rho0 = qw.thermal_state(
            qw.engine_hamiltonian(p, 0.0, qw.DickeSector(3)), p.beta_c
        ).rho
        gibbs = qw.thermal_state(Hh, p.beta_h).rho
        sx, _ = qw.collective_spin_ops(3)
        v = 2 * sx.matrix
        lhs = np.trace(v @ gibbs) * np.trace(v @ rho0)
        # the replacement map sends X -> gibbs tr[X]
        rhs = np.trace(v @ gibbs * np.trace(v @ rho0))
        assert abs(lhs - rhs) < 1e-12

    def test_reset_factor_matches_single_avg(self):
        # each factor of the factorized correlator equals the adiabatic
        # one-time average within the adiabatic error at the fig2a sweep speed
        p = engine(3, 1.4)
        from oracles import DickeAdiabaticOracle

        oracle = DickeAdiabaticOracle(p)
        for (t, t0, beta) in ((3.0, 0.0, p.beta_c), (14.0, T / 2, p.beta_h)):
            exact = oracle.one_time(t, t0, beta)
            adiab = qw.single_avg(p, t, t0, qw.Statistics.BOSE)
            assert abs(exact - adiab) < 0.05 * max(abs(exact), 1e-3)


class TestRunCycleImpulse:
    def test_matches_analytic_enhancement(self):
        for N in (2, 5, 8):
            for delta in (0.0, 1.4):
                pb = engine(N, delta)
                rb = run_cycle(pb, IMPULSE, ho())
                rd = run_cycle(pb, IMPULSE, ho(),
                               statistics=qw.Statistics.DISTINGUISHABLE)
                ana, _, _ = qw.enhancement(pb, IMPULSE, ho())
                num = rb.work.avg_work / rd.work.avg_work
                assert abs(num - ana) < 0.02 * ana

    def test_kick_in_second_stroke(self):
        late = qw.Impulse(g=0.01, t1=T / 2 + 0.35 * T / 2, T=T)
        p = engine(3, 0.0)
        res = run_cycle(p, late, ho())
        rec = qw.impulse_work(p, late, ho(), qw.Statistics.BOSE)
        assert abs(res.work.avg_work - rec.avg_work) < 0.02 * rec.avg_work

    def test_n1_statistics_identical(self):
        p = engine(1, 1.4)
        rb = run_cycle(p, IMPULSE, ho())
        rd = run_cycle(p, IMPULSE, ho(), statistics=qw.Statistics.DISTINGUISHABLE)
        assert abs(rb.work.avg_work - rd.work.avg_work) < 1e-10

    def test_blocked_equals_full(self):
        for delta in (0.0, 1.4):
            p = engine(4, delta, stats=qw.Statistics.DISTINGUISHABLE)
            blocked = run_cycle(p, IMPULSE, ho(),
                                config=PropagatorConfig(product_mode="blocked"))
            full = run_cycle(p, IMPULSE, ho(),
                             config=PropagatorConfig(product_mode="full"))
            rel = abs(blocked.work.avg_work - full.work.avg_work) / full.work.avg_work
            assert rel < 1e-9

    def test_full_mode_cap(self):
        p = engine(9, 0.0, stats=qw.Statistics.DISTINGUISHABLE)
        with pytest.raises(ResourceLimitError):
            run_cycle(p, IMPULSE, ho(), config=PropagatorConfig(product_mode="full"))

    def test_diagnostics_bounds(self):
        res = run_cycle(engine(4, 1.4), IMPULSE, ho())
        d = res.diagnostics
        assert d["trace_drift"] < 1e-10
        assert d["herm_drift"] < 1e-10
        assert d["unitarity_residual"] < 1e-10
        assert d["leakage"] < 1e-6


class TestRunCycleSmooth:
    PLATEAU = qw.SmoothPlateau(g=0.01, delta_t=0.9, alpha=2142.0 / T, T=T)

    def test_matches_perturbative_forms(self):
        # Dicke-sector run against the collective closed-form assembly and the
        # genuine 2^N product space against its own closed form, Delta != 0
        p = engine(3, 0.7)
        res = run_cycle(p, self.PLATEAU, ho(8))
        ana = qw.general_work(p, self.PLATEAU, ho(8), qw.Statistics.BOSE)
        assert abs(res.work.avg_work - ana.avg_work) < 0.02 * ana.avg_work

        pd = engine(3, 0.7, stats=qw.Statistics.DISTINGUISHABLE)
        resd = run_cycle(pd, self.PLATEAU, ho(8),
                         config=PropagatorConfig(product_mode="full"))
        anad = qw.general_work(pd, self.PLATEAU, ho(8), qw.Statistics.DISTINGUISHABLE)
        assert abs(resd.work.avg_work - anad.avg_work) < 0.02 * anad.avg_work

    def test_blocked_equals_full_smooth(self):
        pd = engine(3, 0.7, stats=qw.Statistics.DISTINGUISHABLE)
        rb = run_cycle(pd, self.PLATEAU, ho(8),
                       config=PropagatorConfig(product_mode="blocked"))
        rf = run_cycle(pd, self.PLATEAU, ho(8),
                       config=PropagatorConfig(product_mode="full"))
        assert abs(rb.work.avg_work - rf.work.avg_work) < 1e-9 * rf.work.avg_work

    def test_steppers_agree_short_cycle(self):
        # dense reference steppers on a short cycle with few steps
        p = qw.EngineParams(N=2, Omega0=1.0, Delta=0.4, v=0.5, T=2.0,
                            beta_c=2.0, beta_h=0.125)
        sched = qw.SmoothPlateau(g=0.05, delta_t=0.9, alpha=400.0, T=2.0)
        sysho = qw.harmonic_system(1.3, 6)
        works = {}
        for stepper in ("split-midpoint", "expm-midpoint", "magnus2"):
            res = run_cycle(p, sched, sysho, config=PropagatorConfig(stepper=stepper))
            works[stepper] = res.work.avg_work
        # all three are 2nd order with different error constants; they agree
        # to the size of that shared truncation error, far below the signal
        ref = works["expm-midpoint"]
        assert abs(works["split-midpoint"] - ref) < 1e-4 * ref
        assert abs(works["magnus2"] - ref) < 1e-4 * ref

    def test_dt_above_cap_rejected(self):
        p = engine(2, 0.0)
        cap = default_dt_cap(p, ho(6))
        with pytest.raises(ConfigError):
            run_cycle(p, self.PLATEAU, ho(6), config=PropagatorConfig(dt=2 * cap))

    def test_halving_dt_reduces_error(self):
        # Delta != 0 so the splitting error is measurable (at Delta = 0 the
        # step is exact to rounding for this observable)
        p = engine(2, 0.4)
        sysho = ho(8)
        cap = default_dt_cap(p, sysho)
        w = {}
        for f in (1, 2, 4):
            res = run_cycle(p, self.PLATEAU, sysho,
                            config=PropagatorConfig(dt=cap / f))
            w[f] = res.work.avg_work
        err1, err2 = abs(w[1] - w[4]), abs(w[2] - w[4])
        assert err1 / err2 >= 3.5

    def test_truncation_doubling_stable(self):
        p = engine(2, 0.0)
        w1 = run_cycle(p, self.PLATEAU, ho(8)).work.avg_work
        w2 = run_cycle(p, self.PLATEAU, ho(16)).work.avg_work
        assert abs(w2 - w1) < 1e-6 * abs(w2)

    def test_nonperturbative_top_level_leakage(self):
        # g = 0.5 plateau at a converged truncation: top-two-level population
        # stays below 1e-8 throughout
        strong = qw.SmoothPlateau(g=0.5, delta_t=0.9, alpha=2142.0 / T, T=T)
        res = run_cycle(engine(2, 0.0), strong, ho(16))
        assert res.diagnostics["leakage"] < 1e-8

    def test_truncation_leakage_guard(self):
        strong = qw.SmoothPlateau(g=3.0, delta_t=0.9, alpha=2142.0 / T, T=T)
        with pytest.raises((PropagationError, Exception)):
            run_cycle(engine(4, 0.0), strong, ho(3))

    def test_trace_collection(self):
        res = run_cycle(engine(2, 0.0), self.PLATEAU, ho(6),
                        config=PropagatorConfig(collect_trace=True))
        trace = res.diagnostics["trace"]
        assert len(trace) > 10
        t, tr, leak, es = trace[-1]
        assert abs(tr - 1.0) < 1e-9
        assert es >= 0


class TestAdiabaticityWitness:
    def test_delta0_exact(self):
        assert adiabaticity_witness(engine(3, 0.0)) == 0.0

    def test_small_at_fig2_speed(self):
        w = adiabaticity_witness(engine(4, 1.4))
        assert w < 0.05

    def test_decreases_with_speed(self):
        slow = adiabaticity_witness(engine(2, 1.0, v=0.02))
        fast = adiabaticity_witness(engine(2, 1.0, v=0.4))
        assert slow < fast

    def test_sudden_limit_matches_rotation_angle(self):
        # tiny T: the state is frozen while the basis rotates by delta-chi
        p = qw.EngineParams(N=1, Omega0=1.0, Delta=1.0, v=200.0, T=0.02,
                            beta_c=2.0, beta_h=0.125)
        w = adiabaticity_witness(p)
        chi0 = float(p.theta(0.0))
        chih = float(p.theta(0.01))
        expect = math.sin((chih - chi0) / 2) ** 2
        assert abs(w - expect) < 0.15 * expect


class TestCycleResultSerialization:
    def test_roundtrip_dict(self):
        res = run_cycle(engine(2, 0.0), IMPULSE, ho(6))
        d = res.to_dict(include_state=True)
        assert d["work"]["method"] == "exact-numerical"
        assert len(d["final_state"]["re"]) == 6
        assert {"trace_drift", "unitarity_residual"} <= set(d["diagnostics"])
