import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from netsir.contact_graph import ContactGraph, TopologyConfig, WeightMatrix, binarize, generate_weights
from netsir.errors import ConfigurationError, ContractViolation, StructuralError
from netsir.scenarios import (
    ControlSchedule,
    ControlStrategy,
    Kind,
    draw_replication,
    replication_seed,
    resolve_schedule,
)
from netsir.sir_dynamics import (
    CONSERVATION_TOL,
    EpidemicParams,
    SirState,
    bulk_sir,
    euler_step,
    graph_beta,
    init_state,
    lognormal_parameters,
    rescale_beta,
    run_epidemic,
    sample_rates,
    vaccinate,
)


def loop_step(p_S, p_I, p_R, adj, beta, delta, dt):
    """Node-by-node reference for one Euler step."""
    n = len(p_S)
    S, I, R = p_S.copy(), p_I.copy(), p_R.copy()
    for k in range(n):
        d = sum(adj[k])
        pressure = sum(adj[k][j] * beta[j] * p_I[j] for j in range(n))
        f = p_S[k] * pressure / d if d else 0.0
        S[k] = p_S[k] - dt * f
        I[k] = p_I[k] + dt * (f - delta[k] * p_I[k])
        R[k] = p_R[k] + dt * delta[k] * p_I[k]
    return S, I, R


def random_state(rng, n):
    x = rng.dirichlet([1, 1, 1], size=n)
    return SirState(x[:, 0].copy(), x[:, 1].copy(), x[:, 2].copy())


class TestRates:
    def test_lognormal_parameters_closed_form(self):
        mu, s2 = lognormal_parameters(0.08, 0.05)
        assert np.isclose(np.exp(mu + s2 / 2), 0.08)
        assert np.isclose((np.exp(s2) - 1) * np.exp(2 * mu + s2), 0.05**2)

    def test_sample_moments(self):
        beta, delta = sample_rates(200_000, 0.08, 0.05, 0.2, 0.05, seed=1)
        assert abs(beta.mean() - 0.08) < 0.001 and abs(beta.std() - 0.05) < 0.002
        assert abs(delta.mean() - 0.2) < 0.001 and abs(delta.std() - 0.05) < 0.002
        assert beta.min() > 0 and delta.min() > 0

    def test_rejects_nonpositive(self):
        with pytest.raises(ConfigurationError):
            sample_rates(5, 0, 0.1, 0.2, 0.1, seed=0)

    def test_params_validation(self):
        with pytest.raises(ConfigurationError):
            EpidemicParams(dt=0)
        with pytest.raises(ConfigurationError):
            EpidemicParams(beta_sd=-1)


def test_init_state():
    s = init_state(100, 7, seed=3)
    assert s.p_I.sum() == 7 and np.array_equal(s.p_S, 1 - s.p_I) and not s.p_R.any()
    with pytest.raises(ConfigurationError):
        init_state(5, 6, seed=0)


class TestEulerStep:
    def test_matches_node_loop(self, rng):
        n = 25
        adj = (rng.random((n, n)) < 0.3).astype(float)
        adj = np.triu(adj, 1)
        adj = adj + adj.T
        adj[3, :] = adj[:, 3] = 0  # an isolated node
        state = random_state(rng, n)
        beta, delta = rng.random(n), rng.random(n)
        out = euler_step(state, ContactGraph(adj), beta, delta, 0.05)
        ref = loop_step(state.p_S, state.p_I, state.p_R, adj.tolist(), beta, delta, 0.05)
        for got, want in zip((out.p_S, out.p_I, out.p_R), ref):
            assert np.allclose(got, want, atol=1e-14)
        assert out.p_S[3] == state.p_S[3]

    @given(st.integers(2, 30), st.floats(0.001, 0.1), st.integers(0, 10**6))
    def test_step_conserves_mass(self, n, dt, seed):
        r = np.random.default_rng(seed)
        adj = np.triu((r.random((n, n)) < 0.5).astype(float), 1)
        adj = adj + adj.T
        state = random_state(r, n)
        out = euler_step(state, adj, r.random(n), r.random(n), dt)
        assert np.allclose(out.total(), state.total(), atol=1e-12)

    def test_complete_graph_uniform_state_matches_bulk_model(self):
        n, dt, steps = 50, 0.02, 400
        adj = np.ones((n, n)) - np.eye(n)
        beta, delta = np.full(n, 0.9), np.full(n, 0.2)
        s = SirState(np.full(n, 0.97), np.full(n, 0.03), np.zeros(n))
        bulk = bulk_sir(0.97, 0.03, 0.0, 0.9, 0.2, dt, steps)
        for t in range(steps):
            s = euler_step(s, adj, beta, delta, dt)
        assert np.allclose(s.p_I, bulk.i[-1], atol=1e-12)
        assert np.allclose(s.p_R, bulk.r[-1], atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(StructuralError):
            euler_step(init_state(4, 1, 0), np.zeros((3, 3)), np.ones(4), np.ones(4), 0.1)


class TestVaccinate:
    @given(st.integers(1, 40), st.floats(0, 1), st.integers(0, 10**6))
    def test_conserves_sums(self, n, e, seed):
        r = np.random.default_rng(seed)
        state = random_state(r, n)
        ids = r.choice(n, size=r.integers(0, n + 1), replace=False)
        out = vaccinate(state, ids, e)
        assert np.allclose(out.total(), state.total(), rtol=0, atol=1e-15)

    def test_operator_values(self):
        s = SirState(np.array([0.5, 1.0]), np.array([0.3, 0.0]), np.array([0.2, 0.0]))
        out = vaccinate(s, [0], 0.9)
        assert np.allclose([out.p_S[0], out.p_I[0], out.p_R[0]],
                           [0.9 * 0.1 + 0.1 * 0.5, 0.1 * 0.3, 0.81 + 0.1 * 0.2])
        assert out.p_S[1] == 1.0 and s.p_S[0] == 0.5  # untouched, input not mutated

    def test_full_efficiency_removes_infection(self):
        s = SirState(np.array([0.2]), np.array([0.7]), np.array([0.1]))
        out = vaccinate(s, [0], 1.0)
        assert (out.p_S[0], out.p_I[0], out.p_R[0]) == (0.0, 0.0, 1.0)

    def test_twice_is_a_contract_violation(self):
        ledger = np.zeros(3, dtype=bool)
        s = init_state(3, 1, 0)
        s = vaccinate(s, [1], 0.9, ledger)
        with pytest.raises(ContractViolation):
            vaccinate(s, [1, 2], 0.9, ledger)
        with pytest.raises(ContractViolation):
            vaccinate(s, [0, 0], 0.9, ledger)

    def test_bad_efficiency(self):
        with pytest.raises(ConfigurationError):
            vaccinate(init_state(3, 1, 0), [0], 1.5)


@pytest.fixture(scope="module")
def default_rep():
    topo, params = TopologyConfig(), EpidemicParams()
    return topo, params, draw_replication(topo, params, replication_seed(0, 0))


def run(rep, topo, params, kinds, **kw):
    strategies = [ControlStrategy(Kind.parse(k)) for k in kinds]
    sched = resolve_schedule(strategies, params.steps)
    return run_epidemic(rep.weights, rep.labels, params, sched, rep.beta, rep.delta,
                        state=rep.init, rng=np.random.default_rng(rep.vacc_seed),
                        n_connect=topo.n_connect, **kw)


class TestRunEpidemic:
    @pytest.mark.parametrize("kinds", [("No", "No"), ("ConfVacc", "ConfVacc"), ("Conf", "Vacc")])
    def test_conservation_on_default_runs(self, default_rep, kinds):
        topo, params, rep = default_rep
        traj = run(rep, topo, params, kinds, keep_states=True)
        per_node = np.abs(traj.states.sum(axis=1) - 1).max()
        assert per_node <= CONSERVATION_TOL and traj.conservation <= CONSERVATION_TOL
        assert traj.clipped == 0 and not traj.warnings

    def test_monotone_between_vaccinations(self, default_rep):
        topo, params, rep = default_rep
        traj = run(rep, topo, params, ("ConfVacc", "Vacc"), keep_states=True)
        event_steps = {t for t, _ in traj.events}
        assert event_steps
        dS = np.diff(traj.states[:, 0], axis=0)
        dR = np.diff(traj.states[:, 2], axis=0)
        vacc_rows = np.array([t in event_steps for t in range(params.steps)])
        assert dS[~vacc_rows].max() <= 1e-15
        assert dR[~vacc_rows].min() >= -1e-15
        # only vaccinated nodes may move "the wrong way" at an event step
        for t, nodes in traj.events:
            others = np.setdiff1d(np.arange(topo.n), nodes)
            assert dS[t, others].max() <= 1e-15

    def test_vaccination_respects_supply_and_uniqueness(self, default_rep):
        topo, params, rep = default_rep
        traj = run(rep, topo, params, ("Vacc", "No"))
        nodes = np.concatenate([v for _, v in traj.events])
        assert len(nodes) == len(np.unique(nodes))
        assert np.all(rep.labels[nodes] == 0)
        assert len(nodes) == 500  # group 0 is exhausted before the dose supply
        assert traj.events[0][0] == 100 and traj.events[1][0] == 106

    def test_confinement_lowers_the_peak(self, default_rep):
        topo, params, rep = default_rep
        no = run(rep, topo, params, ("No", "No"))
        conf = run(rep, topo, params, ("Conf", "Conf"))
        assert conf.max_I.mean() < no.max_I.mean() - 0.05
        assert [e[:2] for e in conf.epochs] == [(0, 100), (100, 300), (300, 1000)]

    def test_epoch_normalisation_variant_differs(self, default_rep):
        topo, params, rep = default_rep
        base = run(rep, topo, params, ("Conf", "Conf"))
        epoch = run(rep, topo, params, ("Conf", "Conf"), normalise_on="epoch")
        assert epoch.max_I.mean() > base.max_I.mean()

    def test_extrema_include_initial_state(self, default_rep):
        topo, params, rep = default_rep
        traj = run(rep, topo, params, ("No", "No"))
        seeded = rep.init.p_I == 1
        assert np.all(traj.max_I[seeded] == 1) and np.all(traj.argmax_I[seeded] == 0)
        assert np.all(traj.min_SR[seeded] == 0)

    def test_group_statistics(self, default_rep):
        topo, params, rep = default_rep
        traj = run(rep, topo, params, ("Conf", "No"), keep_states=True)
        for g in (0, 1):
            m = rep.labels == g
            assert np.allclose(traj.group_means[g], traj.states[:, :, m].mean(axis=2), atol=1e-12)
            assert np.allclose(traj.group_vars[g], traj.states[:, :, m].var(axis=2), atol=1e-12)

    def test_clipping_warns(self):
        n = 30
        w = WeightMatrix(np.ones((n, n)) - np.eye(n))
        params = EpidemicParams(dt=3.0, steps=20, init_infected=5)
        sched = ControlSchedule.uncontrolled(20, 1)
        with warnings.catch_warnings(record=True):
            warnings.simplefilter("always")
            traj = run_epidemic(w, np.zeros(n), params, sched, np.full(n, 2.0),
                                np.full(n, 0.5), rng=1, n_connect=n)
        assert traj.clipped > 0
        for arr in (traj.final.p_S, traj.final.p_I, traj.final.p_R):
            assert arr.min() >= 0 and arr.max() <= 1

    def test_bad_inputs(self, default_rep):
        topo, params, rep = default_rep
        with pytest.raises(StructuralError):
            run_epidemic(rep.weights, rep.labels[:-1], params,
                         ControlSchedule.uncontrolled(10, 2), rep.beta, rep.delta)
        with pytest.raises(StructuralError):
            run_epidemic(rep.weights, rep.labels, params, "nope", rep.beta, rep.delta)

    def test_trajectory_exports(self, default_rep, tmp_path):
        topo, params, rep = default_rep
        traj = run(rep, topo, params, ("ConfVacc", "No"))
        path = traj.to_csv(tmp_path / "t.csv", header="fingerprint=x")
        lines = path.read_text().splitlines()
        assert lines[0] == "# fingerprint=x" and lines[1].startswith("step,g0_mean_S")
        data = np.loadtxt(path, delimiter=",", skiprows=2)
        assert data.shape == (params.steps + 1, 13)
        log = traj.event_log()
        assert log["vaccinations"][0]["step"] == 100
        assert log["epochs"][1]["parameters"] == [20.0, 50.0]


def test_beta_rescaling_round_trip():
    g = binarize(generate_weights(TopologyConfig(n=100, seed=1, n_connect=10)), 10)
    b = np.linspace(0.01, 0.1, 100)
    assert np.allclose(rescale_beta(g, graph_beta(b, g)), b)
    empty = ContactGraph(np.zeros((3, 3)))
    assert not graph_beta(np.ones(3), empty).any()


def test_bulk_sir_conserves_and_validates():
    tr = bulk_sir(0.99, 0.01, 0.0, 0.5, 0.1, 0.05, 500)
    assert np.allclose(tr.s + tr.i + tr.r, 1)
    with pytest.raises(ConfigurationError):
        bulk_sir(0.5, 0.1, 0.0, 0.5, 0.1, 0.05, 5)
