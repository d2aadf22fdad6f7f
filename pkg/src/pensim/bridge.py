"""Line-delimited JSON bridge exposing the batched environment over stdio.

Run with ``python -m pensim.bridge``. Each request is one JSON object per
line ``{"id": ..., "op": ..., ...}`` and receives exactly one response line
``{"id": ..., "ok": true, ...}`` or ``{"id": ..., "ok": false, "error": ...}``.

Arrays cross the boundary as ``{"dtype", "shape", "data"}`` with ``data``
holding the raw little-endian, C-order (row-major) buffer in base64. The
agent-input layout is [recent (feature-major) | aux | history]; rewards are
float64, dones uint8, masks uint8.

Ops:
  hello                                  -> {version, protocol}
  action_count {preset}                  -> {count}
  generate {preset, seed, td?}           -> {text, binary}
  make_env {preset, batch, mode, seed, td?} -> {env, obs_dim, n_actions, max_steps}
  reset {env, seeds}                     -> {agent_input, mask}
  step {env, actions}                    -> {agent_input, reward, done, mask}
  rollout {env, n_steps, policy_seed}    -> whole random-policy trajectory
  close {env}                            -> {}

``mode`` is "fixed" (finished slots keep reporting done) or "dr" (finished
slots auto-reset to a fresh seed derived from the env seed). ``rollout``
executes the same stepping loop natively in one call, including the actions
it sampled, so a client can replay those actions through ``step`` and compare
element-wise.
"""

from __future__ import annotations

import base64
import dataclasses
import json
import sys

import numpy as np

from . import rng as rngmod
from .actions import ActionSpaceSpec, action_count
from .batch import BatchEnv
from .config import load_env_preset
from .env import ObsLayout
from .generation import generate_scenario, scenario_to_bytes, scenario_to_text
from .validation import ValidationError

PROTOCOL_VERSION = 1


def encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a)
    if a.dtype.byteorder == ">":
        a = a.astype(a.dtype.newbyteorder("<"))
    return {
        "dtype": a.dtype.name,
        "shape": list(a.shape),
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def decode_array(doc: dict) -> np.ndarray:
    data = base64.b64decode(doc["data"])
    return np.frombuffer(data, dtype=np.dtype(doc["dtype"])).reshape(doc["shape"]).copy()


class BridgeEnv:
    """One batch of environments driven over the bridge."""

    def __init__(self, preset: str, batch: int, mode: str, seed: int, td: float | None):
        if mode not in ("fixed", "dr"):
            raise ValidationError(f"mode must be 'fixed' or 'dr', got {mode!r}")
        cfg = load_env_preset(preset)
        if td is not None:
            cfg = dataclasses.replace(cfg, train_td=td)
        self.params = cfg.training_generation
        self.env_cfg = cfg.env
        self.mode = mode
        self.seed = seed
        self.env = BatchEnv(self.params, self.env_cfg, batch)
        self.spec = ActionSpaceSpec.from_params(self.params)
        self.layout = ObsLayout.from_scenario_dims(self.params)
        self._reset_counters = np.zeros(batch, dtype=np.int64)

    def reset(self, seeds: list[int]) -> None:
        if len(seeds) != self.env.batch_size:
            raise ValidationError("need one seed per slot")
        for i, s in enumerate(seeds):
            self.env.reset_slot(i, generate_scenario(self.params, int(s)))
        self._reset_counters[:] = 0

    def _auto_reset(self) -> None:
        for i in np.flatnonzero(self.env.done):
            fresh = rngmod.mix64(self.seed, int(i), int(self._reset_counters[i]))
            self._reset_counters[i] += 1
            self.env.reset_slot(int(i), generate_scenario(self.params, fresh & ((1 << 62) - 1)))

    def step(self, actions: np.ndarray):
        out = self.env.step(actions)
        if self.mode == "dr" and self.env.done.any():
            # outputs for this step are already materialized; reset for the next
            result = tuple(np.copy(x) for x in out)
            self._auto_reset()
            return result
        return out


class Server:
    def __init__(self):
        self._envs: dict[int, BridgeEnv] = {}
        self._next_id = 1

    # one method per op; each returns the payload dict

    def op_hello(self, req: dict) -> dict:
        return {"version": PROTOCOL_VERSION, "protocol": "pensim-bridge"}

    def op_action_count(self, req: dict) -> dict:
        cfg = load_env_preset(req["preset"])
        return {"count": action_count(ActionSpaceSpec.from_params(cfg.generation))}

    def op_generate(self, req: dict) -> dict:
        cfg = load_env_preset(req["preset"])
        if req.get("td") is not None:
            cfg = dataclasses.replace(cfg, train_td=float(req["td"]))
        scenario = generate_scenario(cfg.training_generation, int(req["seed"]))
        return {
            "text": scenario_to_text(scenario),
            "binary": base64.b64encode(scenario_to_bytes(scenario)).decode("ascii"),
        }

    def op_make_env(self, req: dict) -> dict:
        env = BridgeEnv(
            preset=req["preset"],
            batch=int(req["batch"]),
            mode=req.get("mode", "fixed"),
            seed=int(req.get("seed", 0)),
            td=req.get("td"),
        )
        eid = self._next_id
        self._next_id += 1
        self._envs[eid] = env
        return {
            "env": eid,
            "obs_dim": env.layout.agent_input_dim,
            "n_actions": env.spec.total_actions,
            "n_hosts": env.spec.n_hosts_total,
            "max_steps": env.env_cfg.max_steps,
        }

    def _env(self, req: dict) -> BridgeEnv:
        eid = req.get("env")
        if eid not in self._envs:
            raise ValidationError(f"unknown env handle {eid!r}")
        return self._envs[eid]

    def op_reset(self, req: dict) -> dict:
        env = self._env(req)
        env.reset([int(s) for s in req["seeds"]])
        return {
            "agent_input": encode_array(env.env.agent_input),
            "mask": encode_array(env.env.mask_flat),
        }

    def op_step(self, req: dict) -> dict:
        env = self._env(req)
        actions = decode_array(req["actions"]).astype(np.int64)
        agent_input, reward, done, mask = env.step(actions)
        return {
            "agent_input": encode_array(agent_input),
            "reward": encode_array(reward),
            "done": encode_array(done.astype(np.uint8)),
            "mask": encode_array(mask),
        }

    def op_rollout(self, req: dict) -> dict:
        env = self._env(req)
        n_steps = int(req["n_steps"])
        rng = rngmod.stream(int(req["policy_seed"]), rngmod.STREAM_BENCH)
        b = env.env.batch_size
        actions = np.zeros(b, dtype=np.int64)
        traj_actions = np.zeros((n_steps, b), dtype=np.int64)
        traj_inputs = np.zeros((n_steps, b, env.layout.agent_input_dim), dtype=np.float32)
        traj_rewards = np.zeros((n_steps, b), dtype=np.float64)
        traj_dones = np.zeros((n_steps, b), dtype=np.uint8)
        traj_masks = np.zeros((n_steps, b, env.spec.total_actions), dtype=np.uint8)
        for t in range(n_steps):
            env.env.sample_valid_actions(rng, actions)
            traj_actions[t] = actions
            agent_input, reward, done, mask = env.step(actions)
            traj_inputs[t] = agent_input
            traj_rewards[t] = reward
            traj_dones[t] = done
            traj_masks[t] = mask
        return {
            "actions": encode_array(traj_actions),
            "agent_inputs": encode_array(traj_inputs),
            "rewards": encode_array(traj_rewards),
            "dones": encode_array(traj_dones),
            "masks": encode_array(traj_masks),
        }

    def op_close(self, req: dict) -> dict:
        self._envs.pop(req.get("env"), None)
        return {}

    def handle(self, line: str) -> str:
        try:
            req = json.loads(line)
            op = req.get("op")
            fn = getattr(self, f"op_{op}", None)
            if fn is None:
                raise ValidationError(f"unknown op {op!r}")
            payload = fn(req)
            return json.dumps({"id": req.get("id"), "ok": True, **payload})
        except Exception as exc:  # the bridge must answer every request
            rid = None
            try:
                rid = json.loads(line).get("id")
            except Exception:
                pass
            return json.dumps({"id": rid, "ok": False, "error": f"{type(exc).__name__}: {exc}"})


def main() -> int:
    server = Server()
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        sys.stdout.write(server.handle(line) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
