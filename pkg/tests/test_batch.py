import numpy as np
import pytest

from pensim import env as senv
from pensim.actions import ActionSpaceSpec, compute_mask
from pensim.batch import BatchEnv
from pensim.bench import count_step_allocations
from pensim.config import EnvConfig
from pensim.generation import generate_scenario
from pensim.rng import stream
from pensim.validation import ValidationError


@pytest.fixture
def batch_setup(smoke_params):
    config = EnvConfig(max_steps=50)
    scenarios = [generate_scenario(smoke_params, 500 + i) for i in range(48)]
    benv = BatchEnv(smoke_params, config, len(scenarios))
    benv.reset_all(scenarios)
    return benv, scenarios, config


def test_batch_equals_sequential(batch_setup, smoke_params):
    benv, scenarios, config = batch_setup
    spec = ActionSpaceSpec.from_params(smoke_params)
    states = [senv.reset(s, config)[0] for s in scenarios]
    rng = stream(1, 0xB0)
    acts = np.zeros(benv.batch_size, dtype=np.int64)
    for _ in range(70):
        benv.sample_valid_actions(rng, acts)
        ai_b, rew_b, done_b, mask_b = benv.step(acts)
        for i, scenario in enumerate(scenarios):
            states[i], ai, r, done, _ = senv.step(states[i], int(acts[i]), scenario, config)
            assert np.array_equal(ai_b[i], ai)
            assert float(rew_b[i]) == r
            assert bool(done_b[i]) == done
            flat, _, _ = compute_mask(spec, states[i], scenario)
            assert np.array_equal(mask_b[i], flat)


def test_batch_of_one_equals_single(smoke_params):
    config = EnvConfig(max_steps=30)
    scenario = generate_scenario(smoke_params, 9)
    benv = BatchEnv(smoke_params, config, 1)
    benv.reset_all([scenario])
    state, _ = senv.reset(scenario, config)
    rng = stream(2, 0xB1)
    acts = np.zeros(1, dtype=np.int64)
    for _ in range(30):
        benv.sample_valid_actions(rng, acts)
        ai_b, rew_b, done_b, _ = benv.step(acts)
        state, ai, r, done, _ = senv.step(state, int(acts[0]), scenario, config)
        assert np.array_equal(ai_b[0], ai)
        assert float(rew_b[0]) == r and bool(done_b[0]) == done


def test_permuted_batch_gives_permuted_results(smoke_params):
    config = EnvConfig(max_steps=30)
    scenarios = [generate_scenario(smoke_params, 100 + i) for i in range(16)]
    perm = np.arange(16)[::-1]

    a = BatchEnv(smoke_params, config, 16)
    a.reset_all(scenarios)
    b = BatchEnv(smoke_params, config, 16)
    b.reset_all([scenarios[int(j)] for j in perm])

    rng = stream(3, 0xB2)
    acts = np.zeros(16, dtype=np.int64)
    for _ in range(25):
        a.sample_valid_actions(rng, acts)
        out_a = a.step(acts)
        out_b = b.step(acts[perm])
        assert np.array_equal(out_a[0][perm], out_b[0])
        assert np.array_equal(out_a[1][perm], out_b[1])
        assert np.array_equal(out_a[2][perm], out_b[2])
        assert np.array_equal(out_a[3][perm], out_b[3])


def test_no_cross_environment_interaction(smoke_params):
    # stepping one slot with varying actions never changes another slot's state
    config = EnvConfig(max_steps=30)
    scenarios = [generate_scenario(smoke_params, 40 + i) for i in range(4)]
    benv = BatchEnv(smoke_params, config, 4)
    benv.reset_all(scenarios)
    rng = stream(9, 0xB3)
    acts = np.zeros(4, dtype=np.int64)
    benv.sample_valid_actions(rng, acts)
    baseline = acts.copy()
    benv.step(baseline)
    snap = benv.discovered.copy(), benv.access.copy()

    benv.reset_all(scenarios)
    other = baseline.copy()
    other[0] = (baseline[0] + 16) % benv.spec.total_actions
    benv.step(other)
    assert np.array_equal(benv.discovered[1:], snap[0][1:])
    assert np.array_equal(benv.access[1:], snap[1][1:])


def test_shape_validation(smoke_params, batch_setup):
    benv, _, _ = batch_setup
    with pytest.raises(ValidationError):
        benv.step(np.zeros(benv.batch_size - 1, dtype=np.int64))
    with pytest.raises(ValidationError):
        benv.step(np.zeros(benv.batch_size, dtype=np.int32))
    bad = np.zeros(benv.batch_size, dtype=np.int64)
    bad[0] = benv.spec.total_actions
    with pytest.raises(ValidationError):
        benv.step(bad)


def test_scenario_shape_mismatch_rejected(smoke_params, batch_setup):
    import dataclasses

    benv, _, _ = batch_setup
    other = dataclasses.replace(smoke_params, n_hosts=9)
    with pytest.raises(ValidationError):
        benv.reset_slot(0, generate_scenario(other, 1))


def test_done_slots_are_noops(smoke_params):
    config = EnvConfig(max_steps=3)
    scenarios = [generate_scenario(smoke_params, i) for i in range(8)]
    benv = BatchEnv(smoke_params, config, 8)
    benv.reset_all(scenarios)
    acts = np.zeros(8, dtype=np.int64)
    for _ in range(3):
        benv.step(acts)
    assert benv.done.all()
    frozen = benv.step_count.copy()
    ai, reward, done, _ = benv.step(acts)
    assert done.all()
    assert not ai.any()
    assert (reward == 0.0).all()
    assert np.array_equal(benv.step_count, frozen)


def test_sampler_only_draws_valid_actions(batch_setup):
    benv, _, _ = batch_setup
    rng = stream(4, 0xB4)
    acts = np.zeros(benv.batch_size, dtype=np.int64)
    rows = np.arange(benv.batch_size)
    for _ in range(200):
        benv.sample_valid_actions(rng, acts)
        assert benv.mask_flat[rows, acts].all()
        benv.step(acts)


def test_sampler_is_flat_uniform(smoke_params):
    config = EnvConfig(max_steps=1000)
    scenario = generate_scenario(smoke_params, 7)
    n = 2048
    benv = BatchEnv(smoke_params, config, n)
    benv.reset_all([scenario] * n)
    rng = stream(5, 0xB5)
    acts = np.zeros(n, dtype=np.int64)
    counts = np.zeros(benv.spec.total_actions, dtype=np.int64)
    draws = 50
    for _ in range(draws):
        benv.sample_valid_actions(rng, acts)
        np.add.at(counts, acts, 1)
    valid = np.flatnonzero(benv.mask_flat[0])
    freq = counts[valid] / counts.sum()
    assert counts.sum() == n * draws
    assert np.all(np.abs(freq - 1.0 / len(valid)) < 0.15 / len(valid) * len(valid))


def test_step_path_does_not_allocate(smoke_params):
    allocs = count_step_allocations(smoke_params, EnvConfig(max_steps=10_000), n_envs=64, window=50)
    assert allocs == 0
