"""Frozen evaluation sets and the greedy evaluation protocol."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .actions import ActionSpaceSpec
from .batch import BatchEnv
from .config import EnvConfig, ExperimentConfig, GenerationParams
from .generation import Scenario, generate_scenario
from .policy import MASK_OFFSET, action_head_forward, trunk_forward


@dataclass(frozen=True)
class EvalReport:
    eval_td: float
    set_id: int
    solve_rate: float
    mean_return: float
    mean_length: float
    n_episodes: int

    def text_row(self) -> str:
        return (
            f"td={self.eval_td:<6g} set={self.set_id} solve_rate={self.solve_rate:.3f} "
            f"mean_return={self.mean_return:+.4f} mean_length={self.mean_length:.1f} "
            f"episodes={self.n_episodes}"
        )


def report_table(reports: list[EvalReport]) -> str:
    return "\n".join(r.text_row() for r in reports) + "\n"


def eval_set_seeds(cfg: ExperimentConfig, set_id: int) -> list[int]:
    return [
        rngmod.eval_level_seed(cfg.eval_seed_base, set_id, i)
        for i in range(cfg.eval_set_size)
    ]


def build_eval_set(cfg: ExperimentConfig, td: float, set_id: int) -> list[Scenario]:
    """Frozen scenarios for one (density, set) pair; pure in the config."""
    params = dataclasses.replace(cfg.generation, topology_density=td)
    return [generate_scenario(params, s) for s in eval_set_seeds(cfg, set_id)]


def greedy_actions_flat(params: dict, x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    cache = trunk_forward(params, x)
    logits = cache["h2"] @ params["Wf"] + params["bf"]
    logits = logits + (1.0 - mask) * MASK_OFFSET
    return np.argmax(logits, axis=1)


def greedy_actions_2sas(
    params: dict, x: np.ndarray, host_mask: np.ndarray, per_host_masks: np.ndarray, a_h: int
) -> np.ndarray:
    cache = trunk_forward(params, x)
    host_logits = cache["h2"] @ params["Wh"] + params["bh"]
    hosts = np.argmax(host_logits + (1.0 - host_mask) * MASK_OFFSET, axis=1)
    act_logits, _ = action_head_forward(params, cache["h2"], hosts)
    act_mask = per_host_masks[np.arange(len(hosts)), hosts]
    within = np.argmax(act_logits + (1.0 - act_mask) * MASK_OFFSET, axis=1)
    return hosts * a_h + within


def run_policy_episodes(
    params: dict,
    head: str,
    scenarios: list[Scenario],
    gen_params: GenerationParams,
    env_cfg: EnvConfig,
    dtype=np.float32,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Greedy episodes over a scenario list. Returns (solved, returns, lengths)."""
    n = len(scenarios)
    benv = BatchEnv(gen_params, env_cfg, n)
    benv.reset_all(scenarios)
    spec = ActionSpaceSpec.from_params(gen_params)
    returns = np.zeros(n, dtype=np.float64)
    lengths = np.zeros(n, dtype=np.int64)
    live_before = np.ones(n, dtype=bool)
    for _ in range(env_cfg.max_steps):
        x = benv.agent_input.astype(dtype)
        if head == "flat":
            actions = greedy_actions_flat(params, x, benv.mask_flat.astype(dtype))
        else:
            actions = greedy_actions_2sas(
                params, x, benv.host_mask.astype(dtype), benv.static_valid.astype(dtype),
                spec.per_host_actions,
            )
        _, reward, done, _ = benv.step(actions.astype(np.int64))
        returns += np.where(live_before, reward, 0.0)
        lengths += live_before
        live_before = ~done
        if done.all():
            break
    return benv.success.copy(), returns, lengths


def evaluate_policy(
    params: dict,
    head: str,
    cfg: ExperimentConfig,
    td: float,
    set_id: int,
    scenarios: list[Scenario] | None = None,
) -> EvalReport:
    """Solve rate of the greedy policy over one frozen evaluation set."""
    if scenarios is None:
        scenarios = build_eval_set(cfg, td, set_id)
    gen_params = dataclasses.replace(cfg.generation, topology_density=td)
    solved, returns, lengths = run_policy_episodes(params, head, scenarios, gen_params, cfg.env)
    return EvalReport(
        eval_td=td,
        set_id=set_id,
        solve_rate=float(solved.mean()),
        mean_return=float(returns.mean()),
        mean_length=float(lengths.mean()),
        n_episodes=len(scenarios),
    )


def report_to_json(report: EvalReport) -> str:
    return json.dumps(dataclasses.asdict(report), sort_keys=True)
