import numpy as np
import pytest

from nsch2d.chns import (
    EnergyReport,
    KortewegForm,
    RunSinks,
    Scheme,
    SolverConfig,
    State,
    ch_step,
    chemical_potential,
    coupled_step,
    energy,
    make_state,
    ns_step,
    run,
)
from nsch2d.fields import (
    BoundaryMode,
    Grid,
    MacVectorField,
    ScalarField,
    divergence,
    l2,
    linf,
    load_field,
    mac_l2,
    mean,
    random_smooth_scalar,
    save_field,
)
from nsch2d.potential import PotentialSpec, ViscositySpec, d2F, dpsi
from nsch2d.stokes import leray_project

NEU = BoundaryMode.NEUMANN_NOSLIP
PER = BoundaryMode.PERIODIC
SPEC = PotentialSpec(theta=1.0, theta0=2.0, eps=0.0)
VISC = ViscositySpec(nu1=1.0, nu2=3.0)


def taylor_green(grid):
    return MacVectorField.from_functions(
        grid,
        lambda x, y: np.sin(np.pi * x) * np.cos(np.pi * y),
        lambda x, y: -np.cos(np.pi * x) * np.sin(np.pi * y),
    )


class TestChemicalPotential:
    def test_constant_phi(self):
        g = Grid(16, 16)
        m = 0.3
        mu = chemical_potential(ScalarField.full(g, m), SPEC)
        assert np.allclose(mu.values, dpsi(SPEC, m), atol=1e-13)
        from nsch2d.fields import laplace

        assert linf(laplace(mu)) < 1e-11

    def test_linearization_oracle(self):
        # phi = m + a cos(pi x): mu ~ dpsi(m) + (pi^2 + d2psi(m)) a cos + O(a^2) + O(h^2)
        g = Grid(128, 128, 1.0, 1.0, NEU)
        m, a = 0.2, 1e-6
        phi = ScalarField.from_function(g, lambda x, y: m + a * np.cos(np.pi * x))
        mu = chemical_potential(phi, SPEC)
        lin = dpsi(SPEC, m) + (np.pi**2 + float(d2F(SPEC, m)) - SPEC.theta0) * (
            phi.values - m
        )
        assert np.max(np.abs(mu.values - lin)) < a * (np.pi**2) * 2e-3

    def test_domain_error_on_saturated(self):
        g = Grid(8, 8)
        with pytest.raises(Exception):
            chemical_potential(ScalarField.full(g, 1.0), SPEC)


class TestChStep:
    def test_constant_fixed_point(self):
        g = Grid(16, 16)
        st = make_state(MacVectorField.zeros(g), ScalarField.full(g, 0.3), SPEC)
        cfg = SolverConfig(dt=1e-3, t_end=1e-3)
        phi_new, _ = ch_step(st, cfg, SPEC)
        assert np.array_equal(phi_new.values, st.phi.values)

    def test_amplification_factor_oracle(self):
        # one convex-split step on m + a cos(2 pi x / Lx), tiny a:
        # gain = (1 + dt k2 theta0) / (1 + dt k2 (k2 + F''(m))) with the
        # discrete symbol k2 of the mode
        n, L = 64, 1.0
        g = Grid(n, n, L, L, PER)
        m, a, dt = 0.1, 1e-7, 2e-3
        phi = ScalarField.from_function(g, lambda x, y: m + a * np.cos(2 * np.pi * x / L))
        st = make_state(MacVectorField.zeros(g), phi, SPEC)
        cfg = SolverConfig(dt=dt, t_end=dt)
        phi_new, _ = ch_step(st, cfg, SPEC)
        h = L / n
        k2 = (2 - 2 * np.cos(2 * np.pi * h / L)) / h**2
        gain_exact = (1 + dt * k2 * SPEC.theta0) / (
            1 + dt * k2 * (k2 + float(d2F(SPEC, m)))
        )
        # modal projection (cell centers do not sample the cosine crest)
        mode = np.cos(2 * np.pi * g.xc() / L)[:, None] * np.ones(n)[None, :]
        measured = float(np.sum((phi_new.values - m) * mode) / np.sum(mode * mode)) / a
        assert measured == pytest.approx(gain_exact, rel=1e-6)
        # and within 1% of the continuum-symbol prediction
        k2c = (2 * np.pi / L) ** 2
        gain_cont = (1 + dt * k2c * SPEC.theta0) / (
            1 + dt * k2c * (k2c + float(d2F(SPEC, m)))
        )
        assert measured == pytest.approx(gain_cont, rel=0.01)

    def test_mean_conservation_many_steps(self):
        g = Grid(32, 32, 4.0, 4.0, NEU)
        phi0 = random_smooth_scalar(g, seed=3, amplitude=0.3, mean_value=0.1)
        st = make_state(MacVectorField.zeros(g), phi0, SPEC)
        cfg = SolverConfig(dt=1e-3, t_end=1.0, freeze_velocity=True)
        m0 = mean(st.phi)
        for _ in range(1000):
            phi_new, mu_new = ch_step(st, cfg, SPEC)
            st = State(st.t + cfg.dt, st.u, phi_new, mu_new, st.pi)
        assert abs(mean(st.phi) - m0) <= 1e-12 * g.Lx * g.Ly

    def test_pure_ch_energy_monotone(self):
        g = Grid(32, 32, 8.0, 8.0, NEU)
        phi0 = random_smooth_scalar(g, seed=5, amplitude=0.4)
        st = make_state(MacVectorField.zeros(g), phi0, SPEC)
        cfg = SolverConfig(dt=5e-3, t_end=1.0, freeze_velocity=True)
        e_prev = energy(st, SPEC, VISC).total
        for _ in range(200):
            st = coupled_step(st, cfg, SPEC, VISC)
            e_now = energy(st, SPEC, VISC).total
            assert e_now <= e_prev + 1e-12 * max(1.0, abs(e_prev))
            e_prev = e_now

    def test_bound_preservation_under_stress(self):
        # steep prepared stripe, aggressive dt: iterates must stay inside
        g = Grid(48, 48, 4.0, 4.0, NEU)
        phi0 = ScalarField.from_function(
            g, lambda x, y: 0.95 * np.tanh((x - 2.0) / 0.3) + 0.0 * y
        )
        from nsch2d.elliptic import prepare_initial_datum

        prep = prepare_initial_datum(phi0, 30.0, SPEC)
        st = make_state(MacVectorField.zeros(g), prep.phi0k, SPEC)
        cfg = SolverConfig(dt=2e-2, t_end=1.0, freeze_velocity=True)
        for _ in range(50):
            st = coupled_step(st, cfg, SPEC, VISC)
            assert linf(st.phi) < 1.0

    def test_fully_implicit_scheme_steps(self):
        g = Grid(24, 24, 4.0, 4.0, NEU)
        phi0 = random_smooth_scalar(g, seed=7, amplitude=0.3)
        st = make_state(MacVectorField.zeros(g), phi0, SPEC)
        cfg = SolverConfig(
            dt=1e-3, t_end=1e-3, scheme=Scheme.FULLY_IMPLICIT_NEWTON, freeze_velocity=True
        )
        phi_new, mu_new = ch_step(st, cfg, SPEC)
        assert linf(phi_new) < 1.0
        assert abs(mean(phi_new) - mean(phi0)) < 1e-13


class TestNsStep:
    def test_quiescent_uniform_phi(self):
        g = Grid(16, 16, 1.0, 1.0, NEU)
        st = make_state(MacVectorField.zeros(g), ScalarField.full(g, 0.2), SPEC)
        cfg = SolverConfig(dt=1e-3, t_end=1e-3)
        u_new, _ = ns_step(st, st.phi, st.mu, cfg, VISC)
        assert mac_l2(u_new) < 1e-14

    def test_taylor_green_decay_rate(self):
        # uniform phi, matched viscosity nu = 0.1: KE decays at 2 pi^2 nu
        nu_val = 0.1
        g = Grid(64, 64, 2.0, 2.0, PER)
        visc = ViscositySpec(nu1=nu_val, nu2=nu_val)
        st = make_state(taylor_green(g), ScalarField.zeros(g), SPEC)
        cfg = SolverConfig(dt=2e-3, t_end=0.5)
        k0 = 0.5 * mac_l2(st.u) ** 2
        final = run(st, cfg, SPEC, visc, RunSinks(report_every=10**9))
        kT = 0.5 * mac_l2(final.u) ** 2
        rate = np.log(k0 / kT) / cfg.t_end
        assert rate == pytest.approx(2 * np.pi**2 * nu_val, rel=0.02)

    def test_divergence_free_after_projection(self):
        g = Grid(32, 32, 4.0, 4.0, NEU)
        phi0 = random_smooth_scalar(g, seed=9, amplitude=0.4)
        st = make_state(MacVectorField.zeros(g), phi0, SPEC)
        cfg = SolverConfig(dt=1e-3, t_end=1e-3)
        st = coupled_step(st, cfg, SPEC, VISC)
        assert l2(divergence(st.u)) <= 1e-8 * max(mac_l2(st.u), 1e-30) / g.hx
        assert linf(st.phi) < 1.0
        assert abs(mean(st.phi) - mean(phi0)) < 1e-13

    def test_korteweg_forms_agree_after_projection(self):
        # the two forcings differ by a discrete gradient + O(h^2)
        errs = []
        for n in (32, 64):
            g = Grid(n, n, 2.0, 2.0, PER)
            phi = ScalarField.from_function(
                g,
                lambda x, y: 0.3 * np.cos(np.pi * x) * np.cos(np.pi * y),
            )
            mu = chemical_potential(phi, SPEC)
            from nsch2d.chns import _korteweg_force

            f1 = leray_project(_korteweg_force(phi, mu, KortewegForm.MU_GRAD_PHI))
            f2 = leray_project(_korteweg_force(phi, mu, KortewegForm.TENSOR_DIV))
            errs.append(mac_l2(MacVectorField(g, f1.u - f2.u, f1.v - f2.v)))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.25)

    def test_korteweg_velocities_close(self):
        # needs a non-eigenfunction phi, else mu grad(phi) is a pure
        # gradient and both projected velocities are discretization noise
        g = Grid(48, 48, 2.0, 2.0, PER)
        phi0 = ScalarField.from_function(
            g,
            lambda x, y: 0.3 * np.cos(np.pi * x) * np.cos(np.pi * y)
            + 0.2 * np.cos(2 * np.pi * x),
        )
        st = make_state(MacVectorField.zeros(g), phi0, SPEC)
        u1, _ = ns_step(
            st, st.phi, st.mu, SolverConfig(dt=1e-3, t_end=1, korteweg_form="mu_grad_phi"), VISC
        )
        u2, _ = ns_step(
            st, st.phi, st.mu, SolverConfig(dt=1e-3, t_end=1, korteweg_form="tensor_div"), VISC
        )
        diff = mac_l2(MacVectorField(g, u1.u - u2.u, u1.v - u2.v))
        # forcings differ by a discrete gradient: projected velocities agree
        # to the O(h^2) consistency gap
        assert diff <= 5e-2 * max(mac_l2(u1), 1e-30) + 1e-9


class TestEnergyReport:
    def test_zero_state(self):
        g = Grid(16, 16)
        st = make_state(MacVectorField.zeros(g), ScalarField.zeros(g), SPEC)
        rep = energy(st, SPEC, VISC)
        assert rep.total == 0.0 and rep.kinetic == 0.0 and rep.bulk == 0.0

    def test_uniform_phi_bulk(self):
        from nsch2d.potential import psi

        g = Grid(16, 16, 2.0, 3.0, NEU)
        m = 0.4
        st = make_state(MacVectorField.zeros(g), ScalarField.full(g, m), SPEC)
        rep = energy(st, SPEC, VISC)
        assert rep.total == pytest.approx(6.0 * psi(SPEC, m), rel=1e-12)

    def test_taylor_green_kinetic(self):
        g = Grid(64, 64, 2.0, 2.0, PER)
        st = make_state(taylor_green(g), ScalarField.zeros(g), SPEC)
        rep = energy(st, SPEC, VISC)
        assert rep.kinetic == pytest.approx(1.0, rel=1e-12)
        assert rep.total == pytest.approx(rep.kinetic + rep.interfacial + rep.bulk)


class TestRun:
    def test_zero_t_end(self):
        g = Grid(16, 16)
        st = make_state(MacVectorField.zeros(g), ScalarField.full(g, 0.1), SPEC)
        cfg = SolverConfig(dt=1e-3, t_end=0.0)
        out = run(st, cfg, SPEC, VISC)
        assert out is st

    def test_reports_emitted(self):
        g = Grid(16, 16, 4.0, 4.0, NEU)
        st = make_state(
            MacVectorField.zeros(g), random_smooth_scalar(g, 1, amplitude=0.2), SPEC
        )
        cfg = SolverConfig(dt=1e-3, t_end=1e-2, freeze_velocity=True)
        rows = []
        run(st, cfg, SPEC, VISC, RunSinks(on_report=lambda s, st_, e: rows.append((s, e)),
                                          report_every=2))
        assert [s for s, _ in rows] == [0, 2, 4, 6, 8, 10]
        assert all(isinstance(e, EnergyReport) for _, e in rows)

    def test_restart_bit_identical(self, tmp_path):
        g = Grid(32, 32, 4.0, 4.0, NEU)
        phi0 = random_smooth_scalar(g, seed=11, amplitude=0.3)
        st = make_state(MacVectorField.zeros(g), phi0, SPEC)
        cfg10 = SolverConfig(dt=1e-3, t_end=1e-2)
        mid = run(st, cfg10, SPEC, VISC)
        save_field(tmp_path / "s_phi", g, mid.phi.values, "phi", mid.t)
        save_field(tmp_path / "s_u", g, mid.u.u, "u", mid.t)
        save_field(tmp_path / "s_v", g, mid.u.v, "v", mid.t)

        _, phi_v, _, t_load = load_field(tmp_path / "s_phi")
        _, u_v, _, _ = load_field(tmp_path / "s_u")
        _, v_v, _, _ = load_field(tmp_path / "s_v")
        resumed = make_state(MacVectorField(g, u_v, v_v), ScalarField(g, phi_v), SPEC)
        resumed.t = t_load
        cfg20 = SolverConfig(dt=1e-3, t_end=2e-2)
        end_resumed = run(resumed, cfg20, SPEC, VISC)
        end_straight = run(make_state(MacVectorField.zeros(g), phi0, SPEC), cfg20, SPEC, VISC)
        assert np.array_equal(end_resumed.phi.values, end_straight.phi.values)
        assert np.array_equal(end_resumed.u.u, end_straight.u.u)
        assert np.array_equal(end_resumed.u.v, end_straight.u.v)

    def test_rejects_saturated_initial_datum(self):
        g = Grid(8, 8)
        with pytest.raises(ValueError):
            make_state(MacVectorField.zeros(g), ScalarField.full(g, 1.0), SPEC)
