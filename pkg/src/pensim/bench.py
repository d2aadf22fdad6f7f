"""Throughput benchmark: stepping rate versus environment count.

Measures the batched engine under a uniform-random valid-action policy,
resetting between timed chunks so episode terminations do not skew the
steady-state numbers, and counts heap allocations of array data attributed
to the stepping path over a measured window.
"""

from __future__ import annotations

import time
import tracemalloc
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .batch import BatchEnv
from .config import EnvConfig, GenerationParams
from .generation import generate_scenario

DEFAULT_ENV_COUNTS = (8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096)


@dataclass(frozen=True)
class BenchRow:
    n_envs: int
    steps_per_s: float
    us_per_batch_step: float


def _make_env(params: GenerationParams, config: EnvConfig, n_envs: int, seed: int) -> BatchEnv:
    env = BatchEnv(params, config, n_envs)
    env.reset_all([generate_scenario(params, rngmod.mix64(seed, i)) for i in range(n_envs)])
    return env


def measure_throughput(
    params: GenerationParams,
    config: EnvConfig,
    n_envs: int,
    seed: int = 0,
    chunk_steps: int = 100,
    n_chunks: int = 3,
    warmup_steps: int = 30,
) -> BenchRow:
    env = _make_env(params, config, n_envs, seed)
    rng = rngmod.stream(seed, rngmod.STREAM_BENCH)
    actions = np.zeros(n_envs, dtype=np.int64)
    for _ in range(warmup_steps):
        env.sample_valid_actions(rng, actions)
        env.step(actions)
    elapsed = 0.0
    for chunk in range(n_chunks):
        env.reset_all([generate_scenario(params, rngmod.mix64(seed, chunk, i)) for i in range(n_envs)])
        t0 = time.perf_counter()
        for _ in range(chunk_steps):
            env.sample_valid_actions(rng, actions)
            env.step(actions)
        elapsed += time.perf_counter() - t0
    total = n_envs * chunk_steps * n_chunks
    return BenchRow(
        n_envs=n_envs,
        steps_per_s=total / elapsed,
        us_per_batch_step=elapsed / (chunk_steps * n_chunks) * 1e6,
    )


def run_bench(
    params: GenerationParams,
    config: EnvConfig,
    env_counts: tuple[int, ...] = DEFAULT_ENV_COUNTS,
    seed: int = 0,
) -> list[BenchRow]:
    return [measure_throughput(params, config, n, seed=seed) for n in env_counts]


def count_step_allocations(
    params: GenerationParams,
    config: EnvConfig,
    n_envs: int = 256,
    window: int = 100,
    seed: int = 0,
) -> int:
    """Heap allocations of numpy array data attributed to the stepping path
    over ``window`` steady-state steps. Zero by design."""
    env = _make_env(params, config, n_envs, seed)
    rng = rngmod.stream(seed, rngmod.STREAM_BENCH)
    actions = np.zeros(n_envs, dtype=np.int64)
    for _ in range(30):
        env.sample_valid_actions(rng, actions)
        env.step(actions)
    tracemalloc.start(10)
    env.sample_valid_actions(rng, actions)
    env.step(actions)  # absorb tracing-related lazy setup
    before = tracemalloc.take_snapshot()
    for _ in range(window):
        env.sample_valid_actions(rng, actions)
        env.step(actions)
    after = tracemalloc.take_snapshot()
    tracemalloc.stop()
    filters = [
        tracemalloc.Filter(
            inclusive=True,
            filename_pattern="*pensim/batch.py",
            domain=np.lib.tracemalloc_domain,
        )
    ]
    stats = after.filter_traces(filters).compare_to(before.filter_traces(filters), "lineno")
    return int(sum(s.count_diff for s in stats if s.count_diff > 0))


def bench_table(rows: list[BenchRow], alloc_events: int) -> str:
    lines = [f"{'envs':>6}  {'steps/s':>12}  {'us/batch-step':>14}"]
    for r in rows:
        lines.append(f"{r.n_envs:>6}  {r.steps_per_s:>12,.0f}  {r.us_per_batch_step:>14.1f}")
    lines.append(f"step-path array allocations over measured window: {alloc_events}")
    return "\n".join(lines) + "\n"
