"""Steady-state and propagation solver tests."""

import numpy as np
import pytest
import scipy.linalg as sla

from enaqt import (
    EigenbasisSteadySolver,
    SingularSystemError,
    SystemSpec,
    ValidationError,
    build_hamiltonian,
    efficiency_accumulator,
    efficiency_direct,
    efficiency_gamma_grid,
    propagate,
    semi_infinite_spec,
    site_density,
    survival_probability,
)

FIG1B = SystemSpec("chain", 3, (0,), 1, kappa=0.1, mu=0.01, gamma=0.0)


def test_undephased_reference_efficiency():
    # oracle: N=3 closed form at gamma=0, kappa=0.1, mu=0.01
    # (alpha0/beta0 evaluated with mpmath, 50 digits)
    rep = efficiency_direct(FIG1B)
    assert rep.eta == pytest.approx(0.7128965580831489, abs=1e-12)
    assert rep.eta + rep.eta_loss == pytest.approx(1.0, abs=1e-12)
    assert rep.residual < 1e-9


def test_symmetric_point_value():
    # oracle: N=3 closed form at gamma=kappa=mu=1 gives 25/401
    spec = SystemSpec("chain", 3, (0,), 1, 1.0, 1.0, 1.0)
    assert efficiency_direct(spec).eta == pytest.approx(25 / 401, abs=1e-12)


def test_no_trapping_means_no_yield():
    spec = SystemSpec("chain", 4, (0,), 2, kappa=0.0, mu=0.2, gamma=0.5)
    rep = efficiency_direct(spec)
    assert rep.eta == 0.0
    assert rep.eta_loss == pytest.approx(1.0, abs=1e-12)


def test_weak_rates_give_one_fifth():
    spec = SystemSpec("chain", 3, (0,), 1, kappa=1e-3, mu=1e-3, gamma=0.0)
    assert efficiency_direct(spec).eta == pytest.approx(0.2, abs=5e-3)


def test_strong_dephasing_freezes_transport():
    spec = SystemSpec("chain", 3, (0,), 1, kappa=0.1, mu=0.01, gamma=1e4)
    assert efficiency_direct(spec).eta < 1e-2


def test_weak_trapping_starves_yield():
    spec = SystemSpec("chain", 3, (0,), 1, kappa=1e-6, mu=0.01, gamma=1.0)
    assert efficiency_direct(spec).eta < 1e-3


def test_dark_initial_state_is_singular():
    # middle site of an odd chain with a middle trap, no dephasing, no
    # background loss: the antisymmetric component never decays
    spec = SystemSpec("chain", 3, (1,), 0, kappa=0.1, mu=0.0, gamma=0.0)
    spec = SystemSpec("chain", 5, (2,), 0, kappa=0.1, mu=0.0, gamma=0.0)
    with pytest.raises(SingularSystemError):
        efficiency_direct(spec)


def test_dephasing_lifts_dark_state():
    # same geometry, but any dephasing makes the system relax; with no
    # background loss everything eventually reaches the trap
    spec = SystemSpec("chain", 5, (2,), 0, kappa=0.1, mu=0.0, gamma=0.5)
    rep = efficiency_direct(spec)
    assert rep.eta == pytest.approx(1.0, abs=1e-9)


def test_near_dark_limit_is_half():
    # mu -> 0 with dark geometry: symmetric half is trapped, the rest lost
    spec = SystemSpec("chain", 5, (2,), 0, kappa=0.1, mu=1e-8, gamma=0.0)
    rep = efficiency_direct(spec)
    assert rep.eta == pytest.approx(0.5, abs=1e-6)
    assert rep.residual < 1e-9


def test_mirror_symmetric_inputs_agree():
    left = SystemSpec("chain", 5, (2,), 0, 0.3, 0.05, 0.7)
    right = SystemSpec("chain", 5, (2,), 4, 0.3, 0.05, 0.7)
    assert efficiency_direct(left).eta == pytest.approx(
        efficiency_direct(right).eta, abs=1e-12)


def test_ring_shift_invariance():
    a = SystemSpec("ring", 6, (0,), 2, 0.4, 0.02, 0.3)
    b = SystemSpec("ring", 6, (1,), 3, 0.4, 0.02, 0.3)
    assert efficiency_direct(a).eta == pytest.approx(
        efficiency_direct(b).eta, abs=1e-12)


def test_custom_initial_density():
    spec = SystemSpec("chain", 3, (0,), 2, 0.1, 0.01, 0.2)
    rho0 = site_density(3, 2)
    assert efficiency_direct(spec, rho0=rho0).eta == pytest.approx(
        efficiency_direct(spec).eta, abs=1e-14)


class TestAccumulator:
    def test_matches_direct(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            topology = "chain" if rng.random() < 0.7 else "ring"
            n = int(rng.integers(3, 7))
            n_traps = int(rng.integers(1, n - 1))
            traps = tuple(rng.choice(n, size=n_traps, replace=False))
            free = [s for s in range(n) if s not in traps]
            init = int(rng.choice(free))
            spec = SystemSpec(
                topology, n, traps, init,
                kappa=float(10 ** rng.uniform(-3, 1)),
                mu=float(10 ** rng.uniform(-3, 1)),
                gamma=float(10 ** rng.uniform(-3, 2)),
            )
            direct = efficiency_direct(spec)
            acc = efficiency_accumulator(spec)
            assert acc.eta == pytest.approx(direct.eta, abs=1e-9)
            assert acc.eta_loss == pytest.approx(direct.eta_loss, abs=1e-9)

    def test_epsilon_independent(self):
        spec = SystemSpec("chain", 4, (0,), 2, 0.2, 0.05, 0.8)
        etas = [efficiency_accumulator(spec, epsilon=e).eta
                for e in (1e-3, 1.0, 1e3)]
        assert max(etas) - min(etas) < 1e-10

    def test_no_trapping_gives_exact_zero(self):
        spec = SystemSpec("chain", 3, (0,), 1, kappa=0.0, mu=0.1, gamma=0.5)
        assert efficiency_accumulator(spec).eta == 0.0

    def test_requires_positive_loss(self):
        spec = SystemSpec("chain", 5, (0,), 2, kappa=0.1, mu=0.0, gamma=0.5)
        with pytest.raises(ValidationError):
            efficiency_accumulator(spec)

    def test_rejects_bad_epsilon(self):
        spec = SystemSpec("chain", 3, (0,), 1, 0.1, 0.01, 0.0)
        with pytest.raises(ValidationError):
            efficiency_accumulator(spec, epsilon=-1.0)


class TestPropagation:
    def test_two_site_rabi_oscillation(self):
        # closed two-site system: population oscillates as sin^2(V t)
        spec = SystemSpec("chain", 2, (), 0, 0.0, 0.0, 0.0)
        traj = propagate(spec, horizon=6.0, store_states=True)
        for st in traj.states[:: max(1, len(traj.states) // 20)]:
            expected = np.sin(st.time) ** 2
            assert st.matrix[1, 1].real == pytest.approx(expected, abs=1e-7)

    def test_matches_matrix_exponential(self):
        # oracle: expm of the dense generator at a fixed time
        spec = SystemSpec("chain", 3, (0,), 1, 0.3, 0.05, 0.6)
        from enaqt import build_liouvillian
        lmat = build_liouvillian(spec, dense=True).matrix
        t = 4.0
        rho_exact = sla.expm(lmat * t) @ site_density(3, 1)
        traj = propagate(spec, horizon=t, store_states=True)
        assert np.allclose(
            traj.states[-1].vec, rho_exact, atol=1e-8)

    def test_trace_decay_bound(self):
        # trace can never decay slower than the background-loss envelope
        spec = SystemSpec("chain", 4, (0,), 2, 0.5, 0.1, 0.3)
        traj = propagate(spec, horizon=20.0)
        envelope = np.exp(-2 * spec.mu * traj.times)
        assert np.all(traj.traces <= envelope + 1e-9)

    def test_eta_estimate_matches_direct(self):
        spec = SystemSpec("chain", 4, (1,), 3, 0.4, 0.08, 0.9)
        direct = efficiency_direct(spec)
        traj = propagate(spec, horizon=8.0 / spec.mu)
        assert traj.eta_estimate == pytest.approx(direct.eta, abs=1e-6)
        assert traj.eta_estimate + traj.eta_loss_estimate == pytest.approx(
            1.0, abs=1e-7)

    def test_budget_split_sums_to_one(self):
        spec = SystemSpec("ring", 4, (2,), 0, 0.2, 0.15, 0.4)
        traj = propagate(spec, horizon=8.0 / spec.mu)
        total = (traj.trapped_cumulative[-1] + traj.loss_cumulative[-1]
                 + traj.traces[-1])
        assert total == pytest.approx(1.0, abs=1e-7)

    def test_step_counters_populated(self):
        traj = propagate(FIG1B, horizon=10.0)
        assert traj.n_steps > 0
        assert traj.n_rejected >= 0


def test_survival_probability_basics():
    spec = SystemSpec("chain", 3, (0,), 1, 0.1, 0.05, 0.2)
    traj = propagate(spec, horizon=30.0)
    assert survival_probability(traj, 0.0) == pytest.approx(1.0, abs=1e-10)
    times = np.linspace(0.0, 30.0, 40)
    surv = survival_probability(traj, times)
    assert np.all(np.diff(surv) <= 1e-9)
    with pytest.raises(ValidationError):
        survival_probability(traj, -1.0)
    with pytest.raises(ValidationError):
        survival_probability(traj, 31.0)


def test_three_methods_agree():
    rng = np.random.default_rng(3)
    for _ in range(12):
        n = int(rng.integers(3, 7))
        trap = int(rng.integers(0, n))
        init = int(rng.integers(0, n))
        if init == trap:
            init = (trap + 1) % n
        spec = SystemSpec(
            "ring" if rng.random() < 0.4 else "chain", n, (trap,), init,
            kappa=float(10 ** rng.uniform(-2, 0.5)),
            mu=float(10 ** rng.uniform(-2, 0.5)),
            gamma=float(10 ** rng.uniform(-2, 1)),
        )
        d = efficiency_direct(spec)
        a = efficiency_accumulator(spec)
        traj = propagate(spec, horizon=8.0 / spec.mu)
        assert a.eta == pytest.approx(d.eta, abs=1e-9)
        assert traj.eta_estimate == pytest.approx(d.eta, abs=1e-6)


def test_gamma_grid_matches_pointwise():
    gammas = np.concatenate([[0.0], np.geomspace(1e-3, 1e3, 25)])
    etas = efficiency_gamma_grid(FIG1B, gammas)
    for g, eta in zip(gammas[::5], etas[::5]):
        single = efficiency_direct(FIG1B.with_gamma(float(g))).eta
        assert eta == pytest.approx(single, abs=1e-10)


def test_gamma_grid_rejects_negative():
    with pytest.raises(ValidationError):
        efficiency_gamma_grid(FIG1B, np.array([-0.1, 1.0]))


def test_eigenbasis_solver_agrees_with_dense():
    spec = SystemSpec("chain", 12, (0, 1), 7, 0.3, 0.02, 0.0)
    solver = EigenbasisSteadySolver(spec)
    for gamma in (0.0, 0.1, 2.0):
        eta, eta_loss, resid, method, _ = solver.efficiency(gamma)
        dense = efficiency_direct(spec.with_gamma(gamma))
        assert eta == pytest.approx(dense.eta, abs=1e-9)
        assert eta_loss == pytest.approx(dense.eta_loss, abs=1e-9)
        assert resid < 1e-9


def test_large_system_uses_eigenbasis_path():
    spec = semi_infinite_spec(1.0, 0.5, 0.7, left=40, right=40)
    rep = efficiency_direct(spec)
    assert rep.method == "direct-eigenbasis"
    assert rep.residual < 1e-9
    assert 0.0 < rep.eta < 1.0


def test_report_is_real_and_clean():
    rep = efficiency_direct(FIG1B)
    assert isinstance(rep.eta, float)
    assert isinstance(rep.eta_loss, float)
