import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import spaces, two_point
from kstruct import sampler
from kstruct.models import ModelSpace
from kstruct.rng import make_rng
from kstruct.sampler import (
    AnnealingConfig,
    ProposalKernel,
    _chain_py,
    detailed_balance_check,
    metropolis_step,
    run_chain,
    simulated_annealing,
    stationary_distribution_empirical,
    total_variation,
    transition_matrix,
)
from kstruct.thermo import actions, free_energy_zero_T, gibbs_weights

KERNELS = list(ProposalKernel)

try:
    from kstruct.sampler import _chain_ext
except ImportError:  # pragma: no cover
    _chain_ext = None


def ten_state_space():
    rng = make_rng(5, 50)
    return ModelSpace.from_pairs(list(range(1, 11)), (3.0 * rng.random(10)).tolist())


def test_extension_is_built():
    assert _chain_ext is not None, "compiled kernel missing; run pip install -e ."
    assert sampler.BACKEND == "cython"


@pytest.mark.skipif(_chain_ext is None, reason="compiled kernel not built")
@pytest.mark.parametrize("kernel", KERNELS)
def test_backends_agree_step_for_step(kernel):
    space = ten_state_space()
    a = np.ascontiguousarray(actions(space, 0.7))
    temps = np.repeat(AnnealingConfig(5.0, 0.01, 0.9, 7, 0.7, 3).schedule(), 7)
    u = make_rng(9, 1).random((len(temps), 2))
    out = []
    for mod in (_chain_py, _chain_ext):
        states = np.empty(len(temps), dtype=np.int64)
        acc = np.empty(len(temps), dtype=np.uint8)
        best = mod.run_chain(a, 4, kernel.value, temps, u, states, acc)
        out.append((best, states, acc))
    assert out[0][0] == out[1][0]
    np.testing.assert_array_equal(out[0][1], out[1][1])
    np.testing.assert_array_equal(out[0][2], out[1][2])


@pytest.mark.parametrize("kernel", KERNELS)
def test_repeated_steps_equal_chain(kernel):
    space = ten_state_space()
    states, accepted, _ = run_chain(space, kernel, 0.5, np.full(500, 0.8), seed=11, start=2)
    rng = make_rng(11, sampler.STREAM_CHAIN)
    i = 2
    for t in range(500):
        i, acc = metropolis_step(i, space, kernel, 0.5, 0.8, rng)
        assert (i, acc) == (states[t], accepted[t])


def test_step_zero_and_downhill_always_accepted():
    flat = two_point(1, 1.0, 2, 0.0)  # equal actions at lam = 1
    rng = make_rng(0, 0)
    for _ in range(200):
        nxt, acc = metropolis_step(0, flat, ProposalKernel.UNIFORM_JUMP, 1.0, 0.3, rng)
        assert acc and nxt == 1
    down = two_point(1, 5.0, 2, 0.0)
    for _ in range(200):
        nxt, acc = metropolis_step(0, down, ProposalKernel.UNIFORM_JUMP, 0.0, 0.3, rng)
        assert acc and nxt == 1


def test_step_acceptance_half_for_ln2_barrier():
    T = 0.6
    space = two_point(1, 0.0, 2, T * math.log(2))
    rng = make_rng(2024, 0)
    n = 100_000
    hits = sum(metropolis_step(0, space, ProposalKernel.UNIFORM_JUMP, 0.0, T, rng)[1] for _ in range(n))
    assert abs(hits / n - 0.5) <= 0.01


def test_step_rejects_bad_temperature():
    with pytest.raises(ValueError):
        metropolis_step(0, two_point(1, 0, 2, 1), ProposalKernel.NEIGHBOR_STEP, 0.0, 0.0, make_rng(0))


def test_step_draws_exactly_two_uniforms():
    rng, ref = make_rng(3, 3), make_rng(3, 3)
    metropolis_step(0, ten_state_space(), ProposalKernel.NEIGHBOR_STEP, 0.0, 1.0, rng)
    ref.random(2)
    assert rng.random() == ref.random()


def test_neighbor_reflection_is_symmetric():
    for n in (1, 2, 5):
        Q = ProposalKernel.NEIGHBOR_STEP.matrix(n)
        np.testing.assert_array_equal(Q, Q.T)
        np.testing.assert_allclose(Q.sum(axis=1), 1.0)
    Q = ProposalKernel.UNIFORM_JUMP.matrix(4)
    np.testing.assert_array_equal(Q, Q.T)
    assert np.all(np.diag(Q) == 0)


@pytest.mark.parametrize("kernel", KERNELS)
def test_proposal_frequencies_match_matrix(kernel):
    n = 5
    counts = np.zeros((n, n))
    u = make_rng(1, 1).random(200_000)
    for k, x in enumerate(u):
        i = k % n
        counts[i, _chain_py.propose(i, n, kernel.value, x)] += 1
    freq = counts / counts.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(freq, kernel.matrix(n), atol=0.01)


def test_transition_matrix_examples():
    T = 1.3
    P = transition_matrix(two_point(1, 1.0, 2, 0.0), ProposalKernel.NEIGHBOR_STEP, 1.0, T)
    np.testing.assert_allclose(P, [[0.5, 0.5], [0.5, 0.5]])
    P = transition_matrix(two_point(1, 1.0, 2, 0.0), ProposalKernel.UNIFORM_JUMP, 1.0, T)
    np.testing.assert_array_equal(P, [[0.0, 1.0], [1.0, 0.0]])
    P = transition_matrix(two_point(1, 0.0, 2, T * math.log(2)), ProposalKernel.UNIFORM_JUMP, 0.0, T)
    np.testing.assert_allclose(P, [[0.5, 0.5], [1.0, 0.0]], atol=1e-15)


def test_transition_matrix_rejects_oversized():
    space = ModelSpace.from_pairs(list(range(1001)), [0.0] * 1001)
    with pytest.raises(ValueError):
        transition_matrix(space, ProposalKernel.UNIFORM_JUMP, 0.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(spaces(max_points=50, max_complexity=60), st.sampled_from(KERNELS),
       st.floats(0, 5), st.floats(0.05, 20))
def test_detailed_balance_and_stationarity(space, kernel, lam, T):
    P = transition_matrix(space, kernel, lam, T)
    assert np.all(np.abs(P.sum(axis=1) - 1.0) <= 1e-12)
    assert np.all(P >= -1e-15)
    assert detailed_balance_check(space, kernel, lam, T) <= 1e-12
    pi, _ = gibbs_weights(actions(space, lam), T)
    assert np.max(np.abs(pi @ P - pi)) <= 1e-12


def test_single_state_balance():
    assert detailed_balance_check(ModelSpace.from_pairs([3], [1.0]), ProposalKernel.NEIGHBOR_STEP, 1, 1) == 0.0


def test_broken_kernel_violates_balance():
    space = ModelSpace.from_pairs([1, 2, 3], [0.0, 1.0, 2.0])
    Q = np.array([[0.0, 0.9, 0.1], [0.2, 0.0, 0.8], [0.5, 0.5, 0.0]])
    assert detailed_balance_check(space, Q, 0.5, 1.0) > 1e-3


def test_empirical_distribution_converges():
    space = ten_state_space()
    pi, _ = gibbs_weights(actions(space, 0.2), 1.0)
    tv = [total_variation(stationary_distribution_empirical(
        space, ProposalKernel.UNIFORM_JUMP, 0.2, 1.0, n, n // 100, seed=3), pi) for n in (10**4, 10**5, 10**6)]
    assert tv[-1] <= 0.05
    assert tv[1] <= tv[0] + 0.02 and tv[2] <= tv[1] + 0.02


def test_uniform_action_gives_uniform_visits():
    space = ModelSpace.from_pairs(list(range(1, 9)), [0.0] * 8)
    emp = stationary_distribution_empirical(space, ProposalKernel.NEIGHBOR_STEP, 0.0, 1.0, 200_000, 1000, seed=4)
    assert total_variation(emp, np.full(8, 1 / 8)) <= 0.05


def test_empirical_is_deterministic():
    space = ten_state_space()
    a = stationary_distribution_empirical(space, ProposalKernel.NEIGHBOR_STEP, 0.1, 2.0, 5000, 100, seed=8)
    b = stationary_distribution_empirical(space, ProposalKernel.NEIGHBOR_STEP, 0.1, 2.0, 5000, 100, seed=8)
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        stationary_distribution_empirical(space, ProposalKernel.NEIGHBOR_STEP, 0.1, 2.0, 100, 100, seed=8)


@pytest.mark.parametrize(
    "kwargs",
    [dict(t0=1.0, t_min=2.0), dict(gamma=1.0), dict(gamma=0.0), dict(steps_per_temperature=0), dict(lam=-1.0)],
)
def test_annealing_config_validation(kwargs):
    base = dict(t0=10.0, t_min=1e-3, gamma=0.9, steps_per_temperature=10, lam=0.0, seed=0)
    base.update(kwargs)
    with pytest.raises(ValueError):
        AnnealingConfig(**base)


def test_schedule_is_geometric():
    temps = AnnealingConfig(8.0, 1.0, 0.5, 1, 0.0, 0).schedule()
    assert temps.tolist() == [8.0, 4.0, 2.0]


def test_annealing_single_state():
    best, stats = simulated_annealing(ModelSpace.from_pairs([2], [1.0]), AnnealingConfig(1.0, 0.1, 0.5, 4, 0.0, 0))
    assert best == 0 and stats.acceptance_rate == 1.0
    assert stats.visits.tolist() == [stats.trajectory_length]


def test_annealing_prefers_simple_model_past_crossing():
    space = two_point(1, 2.0, 3, 0.0)  # crossing at lam = 1
    wins = 0
    for seed in range(100):
        best, _ = simulated_annealing(space, AnnealingConfig(10.0, 1e-3, 0.95, 20, 1.5, seed,
                                                             initial_index=1))
        wins += best == 0
    assert wins >= 95


def test_annealing_trace_and_record():
    space = ten_state_space()
    cfg = AnnealingConfig(20.0, 1e-2, 0.9, 30, 0.3, 12)
    best, stats = simulated_annealing(space, cfg, record=True)
    tr = stats.trace
    assert stats.trajectory_length == len(tr.states) == int(stats.visits.sum())
    assert 0.0 <= stats.acceptance_rate <= 1.0
    assert stats.final_state_index == tr.states[-1]
    record = np.minimum.accumulate(np.concatenate([[actions(space, 0.3)[0]], tr.actions]))
    assert np.all(np.diff(record) <= 0)
    assert actions(space, 0.3)[best] == record[-1]


def test_annealing_finds_argmin_small_spaces():
    rng = make_rng(77, 0)
    for _ in range(5):
        space = ModelSpace.from_pairs(list(range(1, 13)), (20 * rng.random(12)).tolist())
        target = [p.complexity for p in space.points].index(free_energy_zero_T(space, 0.5)[1])
        a = actions(space, 0.5)
        cfg = dict(t0=10 * float(np.ptp(a)), t_min=1e-3, gamma=0.95, steps_per_temperature=50, lam=0.5)
        hits = sum(simulated_annealing(space, AnnealingConfig(seed=s, **cfg))[0] == target for s in range(20))
        assert hits >= 19


def test_trace_csv(tmp_path):
    _, stats = simulated_annealing(two_point(1, 2, 3, 0), AnnealingConfig(1.0, 0.5, 0.5, 3, 0.0, 0), record=True)
    lines = stats.trace.write_csv(tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "step,temperature,state_index,action,accepted"
    assert len(lines) == 1 + stats.trajectory_length
