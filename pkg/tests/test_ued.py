import numpy as np
import pytest

from pensim.config import PLRConfig
from pensim.rng import stream
from pensim.ued import (
    DomainRandomization,
    LevelBuffer,
    PrioritizedLevelReplay,
    gradient_gate,
    make_level_source,
    replay_distribution,
    score_maxmc,
    score_pvl,
    update_buffer,
)
from pensim.validation import ValidationError


class TestScores:
    def test_maxmc_zero_when_values_match_returns(self):
        returns = np.array([1.5, 1.5])
        values = np.full(7, 1.5)
        assert score_maxmc(returns, values) == 0.0

    def test_maxmc_uses_best_return(self):
        assert score_maxmc(np.array([0.0, 2.0]), np.array([1.0, 1.0])) == pytest.approx(1.0)

    def test_pvl_zero_for_nonpositive_advantages(self):
        assert score_pvl(np.array([-1.0, 0.0, -0.5])) == 0.0

    def test_pvl_positive_parts(self):
        assert score_pvl(np.array([1.0, -2.0, 3.0])) == pytest.approx(4.0 / 3.0)

    def test_empty_trajectory_scores_zero(self):
        assert score_maxmc(np.array([]), np.array([])) == 0.0
        assert score_pvl(np.array([])) == 0.0


class TestGradientGate:
    def test_plain_always_updates(self):
        cfg = PLRConfig(robust=False)
        assert gradient_gate(cfg, is_replay=False)
        assert gradient_gate(cfg, is_replay=True)

    def test_robust_updates_only_on_replay(self):
        cfg = PLRConfig(robust=True)
        assert not gradient_gate(cfg, is_replay=False)
        assert gradient_gate(cfg, is_replay=True)


def _filled_buffer(scores, cfg, start_seed=0):
    buf = LevelBuffer(capacity=cfg.buffer_capacity)
    for i, s in enumerate(scores):
        update_buffer(buf, start_seed + i, s, was_replay=False, config=cfg)
    return buf


class TestReplayDistribution:
    def test_rank_weights_example(self):
        cfg = PLRConfig(temperature=1.0, staleness_coef=0.0, buffer_capacity=10)
        buf = _filled_buffer([3.0, 1.0, 2.0], cfg)
        probs = replay_distribution(buf, cfg)
        np.testing.assert_allclose(probs, [6 / 11, 2 / 11, 3 / 11])

    def test_full_staleness_ignores_scores(self):
        cfg = PLRConfig(temperature=1.0, staleness_coef=1.0, buffer_capacity=10)
        buf = _filled_buffer([5.0, 0.1, 2.0], cfg)
        probs = replay_distribution(buf, cfg)
        staleness = np.array([buf.episode_count - e.last_visited for e in buf.entries], float)
        np.testing.assert_allclose(probs, staleness / staleness.sum())

    def test_high_temperature_flattens(self):
        cfg = PLRConfig(temperature=1e6, staleness_coef=0.0, buffer_capacity=10)
        buf = _filled_buffer([9.0, 1.0, 4.0, 2.0], cfg)
        probs = replay_distribution(buf, cfg)
        np.testing.assert_allclose(probs, 0.25, atol=1e-4)

    def test_topk_uniform_over_best(self):
        cfg = PLRConfig(prioritization="topk", top_k=2, staleness_coef=0.0, buffer_capacity=10)
        buf = _filled_buffer([5.0, 1.0, 3.0, 0.5], cfg)
        probs = replay_distribution(buf, cfg)
        np.testing.assert_allclose(probs, [0.5, 0.0, 0.5, 0.0])

    def test_sums_to_one_and_nonnegative(self):
        rng = stream(1, 0x91)
        cfg = PLRConfig(temperature=1.4, staleness_coef=0.3, buffer_capacity=200)
        buf = _filled_buffer(rng.standard_normal(150).tolist(), cfg)
        probs = replay_distribution(buf, cfg)
        assert abs(probs.sum() - 1.0) < 1e-12
        assert (probs >= 0).all()

    def test_empty_buffer_rejected(self):
        with pytest.raises(ValidationError):
            replay_distribution(LevelBuffer(capacity=4), PLRConfig())


class TestUpdateBuffer:
    def test_insert_into_empty(self):
        cfg = PLRConfig(buffer_capacity=4)
        buf = LevelBuffer(capacity=4)
        update_buffer(buf, 11, 0.5, was_replay=False, config=cfg)
        assert len(buf) == 1 and 11 in buf

    def test_lowest_priority_candidate_dropped_when_full(self):
        cfg = PLRConfig(buffer_capacity=3, staleness_coef=0.0)
        buf = _filled_buffer([5.0, 4.0, 3.0], cfg)
        update_buffer(buf, 99, 0.1, was_replay=False, config=cfg)
        assert len(buf) == 3
        assert 99 not in buf

    def test_weak_incumbent_evicted_for_stronger_candidate(self):
        cfg = PLRConfig(buffer_capacity=3, staleness_coef=0.0)
        buf = _filled_buffer([5.0, 0.2, 3.0], cfg, start_seed=100)
        update_buffer(buf, 99, 4.0, was_replay=False, config=cfg)
        assert len(buf) == 3
        assert 99 in buf and 101 not in buf

    def test_replay_updates_score_and_stamp(self):
        cfg = PLRConfig(buffer_capacity=4)
        buf = _filled_buffer([1.0, 2.0], cfg)
        before = buf.episode_count
        update_buffer(buf, 0, 9.0, was_replay=True, config=cfg)
        assert buf.entry(0).score == 9.0
        assert buf.entry(0).last_visited == before + 1
        assert len(buf) == 2

    def test_seeds_stay_unique_and_capacity_respected(self):
        rng = stream(2, 0x92)
        cfg = PLRConfig(buffer_capacity=16)
        buf = LevelBuffer(capacity=16)
        for i in range(200):
            update_buffer(buf, int(rng.integers(0, 40)), float(rng.random()),
                          was_replay=False, config=cfg)
            seeds = [e.seed for e in buf.entries]
            assert len(seeds) == len(set(seeds))
            assert len(buf) <= 16

    def test_non_finite_score_rejected(self):
        cfg = PLRConfig(buffer_capacity=4)
        with pytest.raises(ValidationError):
            update_buffer(LevelBuffer(capacity=4), 1, float("nan"), False, cfg)

    def test_snapshot_dump(self):
        cfg = PLRConfig(buffer_capacity=4)
        buf = _filled_buffer([1.0, 3.0], cfg)
        text = buf.snapshot_text()
        assert "seed=0" in text and "seed=1" in text and "staleness=" in text


class TestNextBatch:
    def test_dr_always_fresh(self):
        src = DomainRandomization(run_seed=3)
        rng = stream(3, 0x93)
        batch1 = src.next_batch(8, rng)
        batch2 = src.next_batch(8, rng)
        assert not batch1.is_replay and not batch2.is_replay
        assert len(set(batch1.seeds.tolist()) & set(batch2.seeds.tolist())) == 0

    def test_zero_replay_probability_never_replays(self):
        cfg = PLRConfig(replay_prob=0.0, buffer_capacity=8, min_fill_ratio=0.0)
        src = PrioritizedLevelReplay(run_seed=4, config=cfg)
        rng = stream(4, 0x94)
        for i in range(8):
            src.record(i, 1.0, was_replay=False, max_return=0.0)
        assert not any(src.next_batch(4, rng).is_replay for _ in range(50))

    def test_full_buffer_replay_probability_one(self):
        cfg = PLRConfig(replay_prob=1.0, buffer_capacity=8, min_fill_ratio=0.5)
        src = PrioritizedLevelReplay(run_seed=5, config=cfg)
        rng = stream(5, 0x95)
        for i in range(8):
            src.record(i, 1.0, was_replay=False, max_return=0.0)
        batches = [src.next_batch(4, rng) for _ in range(20)]
        assert all(b.is_replay for b in batches)
        assert all(int(s) in src.buffer for b in batches for s in b.seeds)

    def test_replay_fraction_matches_probability(self):
        cfg = PLRConfig(replay_prob=0.5, buffer_capacity=8, min_fill_ratio=0.5)
        src = PrioritizedLevelReplay(run_seed=6, config=cfg)
        rng = stream(6, 0x96)
        for i in range(8):
            src.record(i, 1.0, was_replay=False, max_return=0.0)
        n = 10_000
        frac = sum(src.next_batch(2, rng).is_replay for _ in range(n)) / n
        assert abs(frac - 0.5) < 0.02

    def test_no_replay_until_min_fill(self):
        cfg = PLRConfig(replay_prob=1.0, buffer_capacity=10, min_fill_ratio=0.5)
        src = PrioritizedLevelReplay(run_seed=7, config=cfg)
        rng = stream(7, 0x97)
        for i in range(4):  # below the fill threshold
            src.record(i, 1.0, was_replay=False, max_return=0.0)
        assert not src.next_batch(2, rng).is_replay
        src.record(4, 1.0, was_replay=False, max_return=0.0)
        assert src.next_batch(2, rng).is_replay


def test_make_level_source_variants():
    assert make_level_source("dr", 0, PLRConfig()).name == "dr"
    assert make_level_source("plr", 0, PLRConfig(robust=False)).name == "plr"
    src = make_level_source("rplr", 0, PLRConfig(robust=False))
    assert src.name == "rplr" and src.config.robust
    with pytest.raises(ValidationError):
        make_level_source("nope", 0, PLRConfig())
