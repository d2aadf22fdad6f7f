"""PPO training loop over the batched environment.

One iteration collects a fixed-length rollout from every environment slot,
computes GAE, and runs several epochs of minibatch updates. Level scheduling
is delegated to a level source: domain randomization lets episodes span
rollout boundaries and draws a fresh scenario on every episode end, while the
prioritized-replay sources reset the whole batch to the iteration's levels
and (for the robust variant) gate gradient updates on exploration batches.

Everything is deterministic in (config, run seed): metrics logs from two runs
with the same inputs are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import policy as pol
from . import rng as rngmod
from .actions import ActionSpaceSpec
from .batch import BatchEnv
from .config import ExperimentConfig
from .env import ObsLayout
from .evaluate import EvalReport, build_eval_set, evaluate_policy
from .generation import generate_scenario
from .ppo import Adam, compute_gae, global_norm_clip, ppo_loss_2sas, ppo_loss_flat
from .ued import PrioritizedLevelReplay, gradient_gate, make_level_source, score_maxmc, score_pvl


@dataclass
class TrainOutcome:
    arch: pol.PolicyArchitecture
    params: dict
    metrics_lines: list[str]
    final_reports: list[EvalReport]
    global_steps: int
    best_train_solve_rate: float
    stopped_early: bool


def params_digest(arch: pol.PolicyArchitecture, params: dict) -> str:
    h = hashlib.sha256()
    for k in pol.param_keys(arch):
        h.update(params[k].tobytes())
    return h.hexdigest()[:16]


class _Rollout:
    """Preallocated per-iteration storage."""

    def __init__(self, n_steps: int, n_envs: int, obs_dim: int, spec: ActionSpaceSpec, head: str):
        t, b = n_steps, n_envs
        self.inputs = np.zeros((t, b, obs_dim), dtype=np.float32)
        self.rewards = np.zeros((t, b), dtype=np.float32)
        self.dones = np.zeros((t, b), dtype=np.float32)
        self.values = np.zeros((t, b), dtype=np.float32)
        self.head = head
        if head == "flat":
            self.actions = np.zeros((t, b), dtype=np.int64)
            self.log_probs = np.zeros((t, b), dtype=np.float32)
            self.masks = np.zeros((t, b, spec.total_actions), dtype=np.uint8)
        else:
            self.hosts = np.zeros((t, b), dtype=np.int64)
            self.actions = np.zeros((t, b), dtype=np.int64)  # within-host index
            self.host_log_probs = np.zeros((t, b), dtype=np.float32)
            self.action_log_probs = np.zeros((t, b), dtype=np.float32)
            self.host_masks = np.zeros((t, b, spec.n_hosts_total), dtype=np.uint8)
            self.action_masks = np.zeros((t, b, spec.per_host_actions), dtype=np.uint8)


class Trainer:
    """Holds the mutable training state; see :func:`train` for the one-shot API."""

    def __init__(self, cfg: ExperimentConfig, run_seed: int, out_dir: str | Path | None = None):
        cfg.validate()
        self.cfg = cfg
        self.run_seed = run_seed
        self.gen_params = cfg.training_generation
        self.spec = ActionSpaceSpec.from_params(self.gen_params)
        self.layout = ObsLayout.from_scenario_dims(self.gen_params)
        ppo = cfg.ppo

        self.arch = pol.PolicyArchitecture(
            input_dim=self.layout.agent_input_dim,
            layer_size=ppo.layer_size,
            n_actions=self.spec.total_actions,
            n_hosts=self.spec.n_hosts_total,
            per_host_actions=self.spec.per_host_actions,
            embed_dim=ppo.embed_dim,
            head=cfg.head,
            dtype="float32",
        )
        self.params = pol.init_params(self.arch, rngmod.stream(run_seed, rngmod.STREAM_POLICY_INIT))
        self.optim = Adam(self.params, lr=ppo.learning_rate)
        self.loss_fn = ppo_loss_flat if cfg.head == "flat" else ppo_loss_2sas

        self.env = BatchEnv(self.gen_params, cfg.env, ppo.n_envs)
        self.source = make_level_source(cfg.algorithm, run_seed, cfg.plr)
        self.is_plr = isinstance(self.source, PrioritizedLevelReplay)
        self.rollout_rng = rngmod.stream(run_seed, rngmod.STREAM_ROLLOUT)
        self.ued_rng = rngmod.stream(run_seed, rngmod.STREAM_UED)
        self.update_rng = rngmod.stream(run_seed, rngmod.STREAM_TRAIN_LEVELS + 0x100)

        self.slot_seeds = np.zeros(ppo.n_envs, dtype=np.uint64)
        self.episode_return = np.zeros(ppo.n_envs, dtype=np.float64)
        self.completed_returns: list[list[float]] = [[] for _ in range(ppo.n_envs)]
        self.finished_episodes = 0
        self.finished_solved = 0
        self.rollout = _Rollout(ppo.n_steps, ppo.n_envs, self.layout.agent_input_dim, self.spec, cfg.head)

        self.global_steps = 0
        self.iteration = 0
        self.metrics_lines: list[str] = []
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self._metrics_fh = None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            self._metrics_fh = open(self.out_dir / "metrics.jsonl", "w")
        self._eval_sets: dict[tuple[float, int], list] = {}
        self.best_train_solve_rate = 0.0

        if not self.is_plr:
            for i in range(ppo.n_envs):
                self._reset_slot_fresh(i)

    # ----- level plumbing ------------------------------------------------

    def _reset_slot_fresh(self, i: int) -> None:
        seed = self.source.fresh_seed()
        self.slot_seeds[i] = seed
        self.env.reset_slot(i, generate_scenario(self.gen_params, seed))
        self.episode_return[i] = 0.0

    def _reset_slot_same(self, i: int) -> None:
        self.env.reset_slot(i, generate_scenario(self.gen_params, int(self.slot_seeds[i])))
        self.episode_return[i] = 0.0

    def _begin_iteration(self) -> bool:
        """PLR draws a whole batch of levels per iteration; DR keeps going."""
        if not self.is_plr:
            return False
        batch = self.source.next_batch(self.cfg.ppo.n_envs, self.ued_rng)
        self.slot_seeds[:] = batch.seeds
        for i in range(self.cfg.ppo.n_envs):
            self.env.reset_slot(i, generate_scenario(self.gen_params, int(batch.seeds[i])))
        self.episode_return[:] = 0.0
        self.completed_returns = [[] for _ in range(self.cfg.ppo.n_envs)]
        return batch.is_replay

    def _on_done_slots(self, done: np.ndarray) -> None:
        for i in np.flatnonzero(done):
            self.completed_returns[i].append(float(self.episode_return[i]))
            self.finished_episodes += 1
            self.finished_solved += int(self.env.success[i])
            if self.is_plr:
                self._reset_slot_same(int(i))
            else:
                self._reset_slot_fresh(int(i))

    # ----- rollout + update ------------------------------------------------

    def _collect(self) -> None:
        ro = self.rollout
        ppo = self.cfg.ppo
        for t in range(ppo.n_steps):
            np.copyto(ro.inputs[t], self.env.agent_input)
            x = ro.inputs[t]
            if self.cfg.head == "flat":
                np.copyto(ro.masks[t], self.env.mask_flat)
                sample = pol.sample_flat(self.params, x, ro.masks[t].astype(np.float32), self.rollout_rng)
                ro.actions[t] = sample.action
                ro.log_probs[t] = sample.log_prob
                env_actions = sample.action
            else:
                np.copyto(ro.host_masks[t], self.env.host_mask)
                sample = pol.forward_2sas(
                    self.params, x,
                    ro.host_masks[t].astype(np.float32),
                    self.env.static_valid.astype(np.float32),
                    self.rollout_rng,
                )
                ro.hosts[t] = sample.host
                ro.actions[t] = sample.action
                ro.host_log_probs[t] = sample.host_log_prob
                ro.action_log_probs[t] = sample.log_prob
                ro.action_masks[t] = self.env.static_valid[np.arange(ppo.n_envs), sample.host]
                env_actions = sample.host * self.spec.per_host_actions + sample.action
            ro.values[t] = sample.value
            _, reward, done, _ = self.env.step(env_actions.astype(np.int64))
            ro.rewards[t] = reward
            ro.dones[t] = done
            self.episode_return += reward
            if done.any():
                self._on_done_slots(done)
        self.global_steps += ppo.n_steps * ppo.n_envs

    def _bootstrap_values(self) -> np.ndarray:
        cache = pol.trunk_forward(self.params, self.env.agent_input)
        return cache["value"]

    def _level_scores(self, advantages: np.ndarray) -> None:
        """Score every slot's level from this iteration's trajectory."""
        assert self.is_plr
        score_fn = self.cfg.plr.score_fn
        for i in range(self.cfg.ppo.n_envs):
            seed = int(self.slot_seeds[i])
            finished = self.completed_returns[i]
            running = float(self.episode_return[i])
            max_ret = max(finished) if finished else running
            max_ret = max(max_ret, self.source.known_max_return(seed))
            if score_fn == "maxmc":
                score = score_maxmc(np.array([max_ret]), self.rollout.values[:, i])
            else:
                score = score_pvl(advantages[:, i])
            self.source.record(seed, score, self._iter_is_replay, max_ret)

    def _update(self, advantages: np.ndarray, returns: np.ndarray) -> dict:
        ppo = self.cfg.ppo
        ro = self.rollout
        n = ppo.n_steps * ppo.n_envs
        obs_dim = self.layout.agent_input_dim
        flat_inputs = ro.inputs.reshape(n, obs_dim)
        adv = advantages.reshape(n)
        ret = returns.reshape(n)
        metrics: dict = {}
        loss_val = 0.0
        for _ in range(ppo.update_epochs):
            perm = self.update_rng.permutation(n)
            mb_size = n // ppo.n_minibatches
            for m in range(ppo.n_minibatches):
                idx = perm[m * mb_size : (m + 1) * mb_size]
                if self.cfg.head == "flat":
                    batch = {
                        "inputs": flat_inputs[idx],
                        "actions": ro.actions.reshape(n)[idx],
                        "log_probs": ro.log_probs.reshape(n)[idx],
                        "values": ro.values.reshape(n)[idx],
                        "advantages": adv[idx],
                        "returns": ret[idx],
                        "mask": ro.masks.reshape(n, -1)[idx].astype(np.float32),
                    }
                else:
                    batch = {
                        "inputs": flat_inputs[idx],
                        "hosts": ro.hosts.reshape(n)[idx],
                        "actions": ro.actions.reshape(n)[idx],
                        "host_log_probs": ro.host_log_probs.reshape(n)[idx],
                        "action_log_probs": ro.action_log_probs.reshape(n)[idx],
                        "values": ro.values.reshape(n)[idx],
                        "advantages": adv[idx],
                        "returns": ret[idx],
                        "host_mask": ro.host_masks.reshape(n, -1)[idx].astype(np.float32),
                        "action_mask": ro.action_masks.reshape(n, -1)[idx].astype(np.float32),
                    }
                loss_val, grads, metrics = self.loss_fn(self.params, batch, ppo)
                grads, grad_norm = global_norm_clip(grads, ppo.max_grad_norm)
                metrics["grad_norm"] = grad_norm
                self.optim.step(self.params, grads)
        metrics["loss"] = loss_val
        return metrics

    # ----- logging / evaluation ---------------------------------------------

    def _emit(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True)
        self.metrics_lines.append(line)
        if self._metrics_fh is not None:
            self._metrics_fh.write(line + "\n")
            self._metrics_fh.flush()

    def _eval_all(self) -> list[EvalReport]:
        reports = []
        tds = self.cfg.eval_tds or (self.gen_params.topology_density,)
        for set_id, td in enumerate(tds):
            key = (float(td), set_id)
            if key not in self._eval_sets:
                self._eval_sets[key] = build_eval_set(self.cfg, td, set_id)
            report = evaluate_policy(
                self.params, self.cfg.head, self.cfg, td, set_id, scenarios=self._eval_sets[key]
            )
            reports.append(report)
            self._emit({
                "type": "eval",
                "global_step": self.global_steps,
                "eval_td": report.eval_td,
                "set_id": report.set_id,
                "solve_rate": report.solve_rate,
                "mean_return": report.mean_return,
                "mean_length": report.mean_length,
            })
            if abs(td - self.gen_params.topology_density) < 1e-12:
                self.best_train_solve_rate = max(self.best_train_solve_rate, report.solve_rate)
        return reports

    # ----- main loop ----------------------------------------------------------

    def run(self, stop_solve_rate: float | None = None) -> TrainOutcome:
        ppo = self.cfg.ppo
        steps_per_iter = ppo.n_steps * ppo.n_envs
        n_iterations = max(1, -(-ppo.total_steps // steps_per_iter))
        eval_interval = self.cfg.eval_interval()
        next_eval = eval_interval
        stopped = False
        reports: list[EvalReport] = []

        for self.iteration in range(n_iterations):
            self._iter_is_replay = self._begin_iteration()
            self._collect()
            bootstrap = self._bootstrap_values()
            advantages, returns = compute_gae(
                self.rollout.rewards, self.rollout.values, self.rollout.dones,
                bootstrap, ppo.gamma, ppo.gae_lambda,
            )
            gated = not gradient_gate(self.cfg.plr, self._iter_is_replay) if self.is_plr else False
            if not gated:
                metrics = self._update(advantages, returns)
            else:
                metrics = {"loss": 0.0}
            if self.is_plr:
                self._level_scores(advantages)

            ep = max(1, self.finished_episodes)
            self._emit({
                "type": "update",
                "iteration": self.iteration,
                "global_step": self.global_steps,
                "is_replay": bool(self._iter_is_replay),
                "gated": bool(gated),
                "episodes": self.finished_episodes,
                "solved_frac": self.finished_solved / ep,
                "params_digest": params_digest(self.arch, self.params),
                **{k: v for k, v in metrics.items()},
            })

            if self.global_steps >= next_eval or self.iteration == n_iterations - 1:
                while next_eval <= self.global_steps:
                    next_eval += eval_interval
                reports = self._eval_all()
                if stop_solve_rate is not None and self.best_train_solve_rate >= stop_solve_rate:
                    stopped = True
                    break

        if self.out_dir is not None:
            pol.save_checkpoint(
                self.out_dir / "checkpoint.npz",
                self.arch, self.params,
                self.rollout_rng.bit_generator.state,
                self.global_steps,
            )
        if self._metrics_fh is not None:
            self._metrics_fh.close()
        return TrainOutcome(
            arch=self.arch,
            params=self.params,
            metrics_lines=self.metrics_lines,
            final_reports=reports,
            global_steps=self.global_steps,
            best_train_solve_rate=self.best_train_solve_rate,
            stopped_early=stopped,
        )


def train(
    cfg: ExperimentConfig,
    run_seed: int,
    out_dir: str | Path | None = None,
    stop_solve_rate: float | None = None,
) -> TrainOutcome:
    """Train one policy; deterministic in (cfg, run_seed)."""
    return Trainer(cfg, run_seed, out_dir).run(stop_solve_rate=stop_solve_rate)
