"""Level sources for training: domain randomization and prioritized replay.

Domain randomization draws a fresh scenario seed for every episode. The
prioritized variants keep a bounded buffer of seeds scored by learning
potential; each training iteration either replays a prioritized batch or
explores fresh seeds, and the robust variant applies gradient updates only
on replayed batches.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .config import PLRConfig
from .validation import ValidationError


def score_maxmc(episode_returns: np.ndarray, value_estimates: np.ndarray) -> float:
    """Mean over steps of (best Monte-Carlo return seen for the level minus
    the value estimate)."""
    if value_estimates.size == 0:
        return 0.0
    if episode_returns.size == 0:
        return 0.0
    return float(np.mean(episode_returns.max() - value_estimates))


def score_pvl(advantages: np.ndarray) -> float:
    """Mean positive part of the GAE advantages."""
    if advantages.size == 0:
        return 0.0
    return float(np.mean(np.maximum(advantages, 0.0)))


def gradient_gate(config: PLRConfig, is_replay: bool) -> bool:
    """Whether this iteration's batch may update parameters. Plain PLR always
    updates; the robust variant updates only on replayed levels."""
    if not config.robust:
        return True
    return bool(is_replay)


@dataclass
class LevelEntry:
    seed: int
    score: float
    last_visited: int
    insertion: int
    max_return: float = -np.inf


@dataclass
class LevelBuffer:
    """Bounded store of scenario seeds with scores and staleness."""

    capacity: int
    entries: list[LevelEntry] = field(default_factory=list)
    episode_count: int = 0
    _insertions: int = 0
    _by_seed: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, seed: int) -> bool:
        return seed in self._by_seed

    def entry(self, seed: int) -> LevelEntry:
        return self.entries[self._by_seed[seed]]

    def fill_ratio(self) -> float:
        return len(self.entries) / self.capacity

    def _reindex(self) -> None:
        self._by_seed = {e.seed: i for i, e in enumerate(self.entries)}

    def snapshot_text(self) -> str:
        """(seed, score, staleness) triplets for inspection."""
        lines = [f"buffer size={len(self.entries)} capacity={self.capacity} episodes={self.episode_count}"]
        for e in sorted(self.entries, key=lambda e: -e.score):
            staleness = self.episode_count - e.last_visited
            lines.append(f"seed={e.seed} score={e.score:.6g} staleness={staleness}")
        return "\n".join(lines) + "\n"


def replay_distribution(buffer: LevelBuffer, config: PLRConfig) -> np.ndarray:
    """Sampling probabilities over buffer entries.

    Rank mode weighs entries by (1/rank)^(1/temperature) over descending
    score ranks; top-k is uniform over the k best. The result is mixed with a
    staleness distribution by the staleness coefficient.
    """
    n = len(buffer.entries)
    if n == 0:
        raise ValidationError("replay distribution of an empty buffer")
    scores = np.array([e.score for e in buffer.entries], dtype=np.float64)
    if config.prioritization == "rank":
        order = np.argsort(-scores, kind="stable")
        ranks = np.empty(n, dtype=np.float64)
        ranks[order] = np.arange(1, n + 1)
        weights = (1.0 / ranks) ** (1.0 / config.temperature)
    else:  # top-k
        k = min(config.top_k, n)
        order = np.argsort(-scores, kind="stable")
        weights = np.zeros(n, dtype=np.float64)
        weights[order[:k]] = 1.0
    score_dist = weights / weights.sum()

    staleness = np.array(
        [buffer.episode_count - e.last_visited for e in buffer.entries], dtype=np.float64
    )
    if staleness.sum() > 0:
        staleness_dist = staleness / staleness.sum()
    else:
        staleness_dist = np.full(n, 1.0 / n)
    return (1.0 - config.staleness_coef) * score_dist + config.staleness_coef * staleness_dist


def update_buffer(
    buffer: LevelBuffer,
    seed: int,
    score: float,
    was_replay: bool,
    config: PLRConfig,
    max_return: float = -np.inf,
) -> None:
    """Record a finished rollout on ``seed``.

    Replayed (or already stored) seeds refresh their score and visit stamp.
    Fresh seeds are inserted; at capacity the lowest-priority entry among
    buffer + candidate is dropped.
    """
    if not np.isfinite(score):
        raise ValidationError(f"non-finite level score {score}")
    buffer.episode_count += 1
    if seed in buffer:
        e = buffer.entry(seed)
        e.score = score
        e.last_visited = buffer.episode_count
        e.max_return = max(e.max_return, max_return)
        return
    entry = LevelEntry(
        seed=seed,
        score=score,
        last_visited=buffer.episode_count,
        insertion=buffer._insertions,
        max_return=max_return,
    )
    buffer._insertions += 1
    if len(buffer.entries) < buffer.capacity:
        buffer.entries.append(entry)
        buffer._reindex()
        return
    # Full: rank the candidate with the incumbents and drop the weakest.
    buffer.entries.append(entry)
    probs = replay_distribution(buffer, config)
    weakest = int(np.lexsort((
        [e.insertion for e in buffer.entries],
        [e.score for e in buffer.entries],
        probs,
    ))[0])
    buffer.entries.pop(weakest)
    buffer._reindex()


@dataclass
class NextBatch:
    seeds: np.ndarray
    is_replay: bool


class DomainRandomization:
    """Fresh seed per episode, drawn from the run's training stream."""

    name = "dr"

    def __init__(self, run_seed: int):
        self._counter = 0
        self._run_seed = run_seed

    def fresh_seed(self) -> int:
        s = rngmod.train_level_seed(self._run_seed, self._counter)
        self._counter += 1
        return s

    def next_batch(self, n_levels: int, rng: np.random.Generator) -> NextBatch:
        return NextBatch(
            seeds=np.array([self.fresh_seed() for _ in range(n_levels)], dtype=np.uint64),
            is_replay=False,
        )


class PrioritizedLevelReplay(DomainRandomization):
    """PLR and robust PLR. One replay/explore decision per training
    iteration, applied to the whole environment batch."""

    def __init__(self, run_seed: int, config: PLRConfig):
        super().__init__(run_seed)
        self.config = config
        self.buffer = LevelBuffer(capacity=config.buffer_capacity)
        self.name = "rplr" if config.robust else "plr"

    def next_batch(self, n_levels: int, rng: np.random.Generator) -> NextBatch:
        filled = self.buffer.fill_ratio() >= self.config.min_fill_ratio
        if filled and rng.random() < self.config.replay_prob:
            probs = replay_distribution(self.buffer, self.config)
            picks = rng.choice(len(self.buffer.entries), size=n_levels, p=probs)
            seeds = np.array([self.buffer.entries[i].seed for i in picks], dtype=np.uint64)
            return NextBatch(seeds=seeds, is_replay=True)
        return super().next_batch(n_levels, rng)

    def record(self, seed: int, score: float, was_replay: bool, max_return: float) -> None:
        update_buffer(self.buffer, seed, score, was_replay, self.config, max_return)

    def known_max_return(self, seed: int) -> float:
        if seed in self.buffer:
            return self.buffer.entry(seed).max_return
        return -np.inf


def make_level_source(algorithm: str, run_seed: int, plr_config: PLRConfig):
    if algorithm == "dr":
        return DomainRandomization(run_seed)
    if algorithm in ("plr", "rplr"):
        cfg = plr_config if (plr_config.robust == (algorithm == "rplr")) else \
            PLRConfig(**{**plr_config.__dict__, "robust": algorithm == "rplr"})
        return PrioritizedLevelReplay(run_seed, cfg)
    raise ValidationError(f"unknown algorithm {algorithm!r}")
