from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from ipsg import simnet as sn
from ipsg.datasets import Dataset, Partition, partition, random_problem
from ipsg.errors import InputError

IPSG = {"alpha": 0.05, "delta": 0.5, "beta": 1.0}


def small():
    ds = random_problem(24, 3, seed=7)
    return ds, partition(ds, 4)


def test_sample_uniform():
    rng = np.random.default_rng(0)
    assert all(sn.sample_uniform(rng, 1) == 0 for _ in range(50))
    with pytest.raises(InputError):
        sn.sample_uniform(rng, 0)


def test_sample_uniform_frequencies():
    rng = np.random.default_rng(2)
    counts = np.zeros(7)
    for _ in range(10**6):
        counts[sn.sample_uniform(rng, 7)] += 1
    assert np.all(np.abs(counts / counts.sum() - 1 / 7) < 0.01 / 7)


def test_streams_deterministic_and_distinct():
    s1, a1 = sn.make_streams(5, 3)
    s2, a2 = sn.make_streams(5, 3)
    assert np.array_equal(s1.integers(1000, size=20), s2.integers(1000, size=20))
    firsts = [g.integers(10**9) for g in a1]
    assert len(set(firsts)) == 3


def test_single_point_is_deterministic_full_gradient():
    ds = Dataset("one", np.array([[2.0]]), np.array([4.0])).with_solution()
    part = partition(ds, 1)
    cfg = sn.RunConfig("sgd", {"alpha": 0.1}, seed=3, t_max=20, eps_tol=1e-12)
    r1, r2 = sn.run_until_stop(cfg, ds, part), sn.run_until_stop(cfg, ds, part)
    assert r1.errors.tobytes() == r2.errors.tobytes()
    # full-gradient step: z' = (1 - 0.1*4) z
    np.testing.assert_allclose(r1.errors, 0.6 ** np.arange(21), rtol=1e-10)


def test_zero_rows_agent_leaves_sgd_unchanged():
    A = np.vstack([np.random.default_rng(0).standard_normal((3, 2)), np.zeros((3, 2))])
    ds = Dataset("z", A, np.concatenate([np.ones(3), np.zeros(3)])).with_solution()
    part = partition(ds, 2)
    cfg = sn.RunConfig("sgd", {"alpha": 0.1}, seed=1)
    server_rng, rngs = sn.make_streams(1, 2)
    agents = sn.build_agents(ds, part, rngs)
    server = sn.Server(cfg, 2, server_rng)
    hits = 0
    for t in range(200):
        before = server.x.copy()
        chosen = sn.run_round(server, agents, t)
        if chosen == 1:
            hits += 1
            assert np.array_equal(server.x, before)
    assert hits > 50


def test_composite_sampling_law_is_global_uniform():
    """Two-stage law by enumeration: Pr[row r] = Pr[agent] * Pr[row | agent] = 1/N."""
    for m, n in [(1, 5), (4, 3), (8, 76)]:
        N = m * n
        prob = {}
        for i in range(m):
            for k in range(n):
                prob[i * n + k] = Fraction(1, m) * Fraction(1, n)
        assert set(prob) == set(range(N))
        assert all(p == Fraction(1, N) for p in prob.values())


def test_empirical_sampling_uniform_chi_square():
    ds, part = small()
    server_rng, rngs = sn.make_streams(11, part.m)
    agents = sn.build_agents(ds, part, rngs)
    counts = np.zeros(ds.N)
    for _ in range(100_000):
        for a in agents:
            a.draw()
        i = sn.sample_uniform(server_rng, part.m)
        counts[part.blocks[i][0] + agents[i]._row] += 1
    p = stats.chisquare(counts).pvalue
    assert p > 0.001


def test_first_stop_examples():
    errors = [1.0] * 5 + [0.4] * 30
    assert sn.first_stop(errors, 0.5, 10) == 14
    assert sn.first_stop([1.0] * 30, 2.0, 10) == 9
    assert sn.first_stop([1.0] * 30, 0.5, 10) is None


def test_run_stop_immediately_satisfied():
    ds, part = small()
    res = sn.run_until_stop(sn.RunConfig("ipsg", IPSG, eps_tol=2.0, t_max=100), ds, part)
    assert res.stop_iter == 9
    assert len(res.errors) == 10


def test_t_max_zero():
    ds, part = small()
    res = sn.run_until_stop(sn.RunConfig("ipsg", IPSG, t_max=0), ds, part)
    assert res.errors.tolist() == [1.0] and res.stop_iter is None
    assert res.messages_up == res.messages_down == 0


def test_stop_matches_trace_and_budget():
    ds, part = small()
    res = sn.run_until_stop(sn.RunConfig("sgd", {"alpha": 0.02}, t_max=3000, eps_tol=0.6), ds, part)
    assert res.errors[0] == 1.0
    assert res.stop_iter == sn.first_stop(res.errors, 0.6, 10)
    assert res.stop_iter <= 3000


def test_message_accounting():
    ds, part = small()
    d = ds.d
    r = sn.run_until_stop(sn.RunConfig("ipsg", IPSG, t_max=50, eps_tol=1e-12), ds, part)
    assert r.messages_up == r.messages_down == part.m * 50
    assert r.bytes_down == r.bytes_up == part.m * 50 * (d + d * d) * 8
    s = sn.run_until_stop(sn.RunConfig("adam", {"alpha": 0.1}, t_max=50, eps_tol=1e-12), ds, part)
    assert s.bytes_up == part.m * 50 * d * 8


@pytest.mark.parametrize("method,params", [("ipsg", IPSG), ("sgd", {"alpha": 0.02}),
                                           ("adagrad", {"alpha": 0.5}), ("adam", {"alpha": 0.05}),
                                           ("amsgrad", {"alpha": "0.1/sqrt(t)"})])
def test_replay_and_compute_modes(method, params):
    ds, part = small()
    base = sn.RunConfig(method, params, seed=42, t_max=300, eps_tol=1e-9)
    r1 = sn.run_until_stop(base, ds, part)
    r2 = sn.run_until_stop(base, ds, part)
    r3 = sn.run_until_stop(sn.RunConfig(method, params, seed=42, t_max=300, eps_tol=1e-9,
                                        compute="consumed"), ds, part)
    assert r1.errors.tobytes() == r2.errors.tobytes() == r3.errors.tobytes()
    r4 = sn.run_until_stop(sn.RunConfig(method, params, seed=43, t_max=300, eps_tol=1e-9), ds, part)
    assert r4.errors.tobytes() != r1.errors.tobytes()


def test_run_many_order_independent_of_jobs():
    ds, part = small()
    cfgs = [sn.RunConfig(m, p, seed=s, t_max=200)
            for m, p in [("ipsg", IPSG), ("sgd", {"alpha": 0.02})] for s in range(3)]
    seq = sn.run_many(cfgs, ds, part, jobs=1)
    par = sn.run_many(cfgs, ds, part, jobs=3)
    for a, b in zip(seq, par):
        assert a.seed == b.seed and a.errors.tobytes() == b.errors.tobytes()


def test_absolute_error_when_starting_at_solution():
    ds, part = small()
    res = sn.run_until_stop(sn.RunConfig("sgd", {"alpha": 0.01}, x0=ds.x_star, t_max=5), ds, part)
    assert res.error_kind == "absolute" and res.errors[0] == 0.0


def test_config_validation():
    with pytest.raises(InputError):
        sn.RunConfig("newton", {})
    with pytest.raises(InputError):
        sn.RunConfig("sgd", {}, eps_tol=0.0)
    with pytest.raises(InputError):
        sn.RunConfig("sgd", {}, window=0)
    with pytest.raises(InputError):
        sn.RunConfig("sgd", {}, compute="some")


def test_unequal_blocks_rejected():
    ds = random_problem(10, 2, seed=0)
    with pytest.raises(InputError):
        sn.run_until_stop(sn.RunConfig("sgd", {"alpha": 0.1}), ds, Partition(2, ((0, 4), (4, 10))))


def test_server_holds_no_agent_data():
    ds, part = small()
    server_rng, rngs = sn.make_streams(0, part.m)
    agents = sn.build_agents(ds, part, rngs)
    server = sn.Server(sn.RunConfig("ipsg", IPSG), ds.d, server_rng)
    sn.run_round(server, agents, 0)
    held = [v for v in vars(server).values() if isinstance(v, np.ndarray)]
    held += [v for v in vars(server.state).values() if isinstance(v, np.ndarray)]
    assert all(h.shape not in ((ds.N, ds.d), (part.n, ds.d)) for h in held)


@given(st.lists(st.floats(0, 2), min_size=0, max_size=40), st.floats(0.01, 1.5), st.integers(1, 12))
def test_first_stop_definition(errors, eps, window):
    t = sn.first_stop(errors, eps, window)
    if t is None:
        assert all(any(e > eps for e in errors[s:s + window])
                   for s in range(0, max(len(errors) - window + 1, 0)))
    else:
        assert all(e <= eps for e in errors[t - window + 1:t + 1])
        assert t - window + 1 >= 0
        for u in range(window - 1, t):
            assert any(e > eps for e in errors[u - window + 1:u + 1])
