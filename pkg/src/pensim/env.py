"""Episode dynamics: reset, step, observations, rewards, termination.

The environment is a partially observable attack simulation. Per step the
agent sees only the outcome of its last action (a sparse per-host matrix plus
a small auxiliary vector) together with the element-wise maximum of all past
outcome matrices this episode. Transitions are deterministic given the
scenario, so a trajectory is fully determined by (scenario, action sequence).

This module is the scalar reference path, written for clarity; the batched
engine in ``batch`` must agree with it element-wise and is tested against it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .actions import ActionDescriptor, ActionKind, ActionSpaceSpec, decode_action, descriptor_str
from .config import ACCESS_ROOT, ACCESS_USER, SUBNET_DMZ, SUBNET_INTERNET, EnvConfig
from .generation import Scenario, reachable_subnets
from .validation import ValidationError

N_ACTION_TYPES = 6
N_OUTCOMES = 4
AUX_DIM = N_ACTION_TYPES + N_OUTCOMES


class Outcome(IntEnum):
    SUCCESS = 0
    CONNECTION_ERROR = 1  # target unreachable
    PERMISSION_ERROR = 2  # insufficient access for subnet scan / privesc
    UNDEFINED_ERROR = 3  # any other failure (wrong service, undiscovered, ...)


@dataclass(frozen=True)
class ObsLayout:
    """Column offsets of one observation row.

    Row layout: [address flag | subnet one-hot | os one-hot | services |
    processes | sensitive | access>=user | access>=root | reachable |
    discovered]. The agent input is [recent, aux, history]; the recent matrix
    is flattened feature-major (all hosts' address flags, then all hosts'
    first subnet bit, ...) so the batched engine writes contiguous blocks.
    """

    n_hosts_total: int
    n_subnets: int
    n_os: int
    n_services: int
    n_processes: int

    @classmethod
    def from_scenario_dims(cls, params) -> "ObsLayout":
        return cls(
            n_hosts_total=params.n_hosts_total,
            n_subnets=params.n_subnets,
            n_os=params.n_os,
            n_services=params.n_services,
            n_processes=params.n_processes,
        )

    @property
    def col_addr(self) -> int:
        return 0

    @property
    def col_subnet(self) -> int:
        return 1

    @property
    def col_os(self) -> int:
        return self.col_subnet + self.n_subnets

    @property
    def col_services(self) -> int:
        return self.col_os + self.n_os

    @property
    def col_processes(self) -> int:
        return self.col_services + self.n_services

    @property
    def col_sensitive(self) -> int:
        return self.col_processes + self.n_processes

    @property
    def col_access_user(self) -> int:
        return self.col_sensitive + 1

    @property
    def col_access_root(self) -> int:
        return self.col_access_user + 1

    @property
    def col_reachable(self) -> int:
        return self.col_access_root + 1

    @property
    def col_discovered(self) -> int:
        return self.col_reachable + 1

    @property
    def f_obs(self) -> int:
        return self.col_discovered + 1

    @property
    def recent_dim(self) -> int:
        return self.n_hosts_total * self.f_obs

    @property
    def aux_dim(self) -> int:
        return AUX_DIM

    @property
    def agent_input_dim(self) -> int:
        return 2 * self.recent_dim + AUX_DIM


@dataclass
class NetworkState:
    """Mutable per-episode state. Only ``reachable``, ``discovered`` and
    ``access`` change after reset; everything else in a scenario is static."""

    reachable: np.ndarray  # (H,) uint8
    discovered: np.ndarray  # (H,) uint8
    access: np.ndarray  # (H,) uint8 in {NONE, USER, ROOT}
    rooted_sensitive: np.ndarray  # (H,) uint8
    compromised_subnets: np.ndarray  # (N_s,) uint8, subnets holding a host with access >= USER
    target_hosts: np.ndarray  # (H,) uint8, sensitive hosts in active subnets (episode goal)
    history: np.ndarray  # (H * F_obs,) float32, running element-wise max of recents
    step: int
    done: bool

    def copy(self) -> "NetworkState":
        return NetworkState(
            reachable=self.reachable.copy(),
            discovered=self.discovered.copy(),
            access=self.access.copy(),
            rooted_sensitive=self.rooted_sensitive.copy(),
            compromised_subnets=self.compromised_subnets.copy(),
            target_hosts=self.target_hosts,
            history=self.history.copy(),
            step=self.step,
            done=self.done,
        )


@dataclass(frozen=True)
class Observation:
    recent: np.ndarray  # (H, F_obs) float32, zero except rows touched by the action
    aux: np.ndarray  # (AUX_DIM,) float32: action-type one-hot + outcome one-hot


def host_feature_matrix(state: NetworkState, scenario: Scenario) -> np.ndarray:
    """Full (H, F) state matrix: dynamic flags first, then the static host
    configuration. Internal/debugging view; never exposed to the agent."""
    h = scenario.n_hosts_total
    subnet_onehot = np.zeros((h, scenario.params.n_subnets), dtype=np.uint8)
    subnet_onehot[np.arange(h), scenario.host_subnet] = 1
    return np.concatenate(
        [
            state.reachable[:, None],
            state.discovered[:, None],
            (state.access >= ACCESS_USER).astype(np.uint8)[:, None],
            (state.access >= ACCESS_ROOT).astype(np.uint8)[:, None],
            scenario.host_sensitive[:, None],
            subnet_onehot,
            scenario.host_os,
            scenario.host_services,
            scenario.host_processes,
        ],
        axis=1,
    )


def scale_reward(r: float, scenario: Scenario, config: EnvConfig) -> float:
    """Normalize by the size-dependent return ceiling so learning signals are
    comparable across generated networks."""
    return r / (scenario.params.n_subnets * config.host_value)


def accumulate_history(history: np.ndarray, recent: np.ndarray) -> np.ndarray:
    if history.shape != recent.shape:
        raise ValidationError(f"history shape {history.shape} != recent shape {recent.shape}")
    return np.maximum(history, recent)


def flatten_recent(recent: np.ndarray) -> np.ndarray:
    """Feature-major flattening of an (H, F_obs) recent matrix."""
    return np.ascontiguousarray(recent.T).reshape(-1)


def agent_input(obs: Observation, history: np.ndarray) -> np.ndarray:
    return np.concatenate([flatten_recent(obs.recent), obs.aux, history]).astype(np.float32)


def reset(scenario: Scenario, config: EnvConfig) -> tuple[NetworkState, np.ndarray]:
    """Initial state: the attacker machine is discovered, reachable and
    rooted; DMZ hosts are reachable (the internet edge exists statically) but
    undiscovered; everything else is dark. The first agent input is zero."""
    h = scenario.n_hosts_total
    layout = ObsLayout.from_scenario_dims(scenario.params)
    atk = scenario.attacker_host

    reachable = (scenario.host_subnet == SUBNET_DMZ).astype(np.uint8)
    reachable[atk] = 1
    discovered = np.zeros(h, dtype=np.uint8)
    discovered[atk] = 1
    access = np.zeros(h, dtype=np.uint8)
    access[atk] = ACCESS_ROOT
    compromised = np.zeros(scenario.params.n_subnets, dtype=np.uint8)
    compromised[SUBNET_INTERNET] = 1

    active = reachable_subnets(scenario.topology)
    targets = (scenario.host_sensitive & active[scenario.host_subnet]).astype(np.uint8)

    state = NetworkState(
        reachable=reachable,
        discovered=discovered,
        access=access,
        rooted_sensitive=np.zeros(h, dtype=np.uint8),
        compromised_subnets=compromised,
        target_hosts=targets,
        history=np.zeros(layout.recent_dim, dtype=np.float32),
        step=0,
        done=False,
    )
    return state, np.zeros(layout.agent_input_dim, dtype=np.float32)


def _success_done(state: NetworkState) -> bool:
    # All sensitive hosts in active subnets rooted (vacuously true if none).
    return bool(np.all(state.rooted_sensitive >= state.target_hosts))


def step(
    state: NetworkState,
    action: int,
    scenario: Scenario,
    config: EnvConfig,
) -> tuple[NetworkState, np.ndarray, float, bool, dict]:
    """One transition. Returns (state', agent_input, reward, done, info).

    Stepping a finished episode is a no-op that reports done with zero
    reward; automatic resets are the training harness's job.
    """
    spec = ActionSpaceSpec.from_params(scenario.params)
    if not 0 <= action < spec.total_actions:
        raise ValidationError(f"action index {action} out of range [0, {spec.total_actions})")
    layout = ObsLayout.from_scenario_dims(scenario.params)

    if state.done:
        zeros = np.zeros(layout.agent_input_dim, dtype=np.float32)
        return state, zeros, 0.0, True, {"noop": True, "success": _success_done(state)}

    desc = decode_action(spec, action)
    nxt = state.copy()
    t = desc.host
    subnet_t = int(scenario.host_subnet[t])
    n_dh = 0

    if desc.kind in (ActionKind.OS_SCAN, ActionKind.SERVICE_SCAN, ActionKind.PROCESS_SCAN):
        cost = config.scan_cost
        if state.reachable[t] and state.discovered[t]:
            outcome = Outcome.SUCCESS
        elif not state.reachable[t]:
            outcome = Outcome.CONNECTION_ERROR
        else:
            outcome = Outcome.UNDEFINED_ERROR
    elif desc.kind == ActionKind.SUBNET_SCAN:
        cost = config.scan_cost
        if not state.reachable[t]:
            outcome = Outcome.CONNECTION_ERROR
        elif state.access[t] < ACCESS_USER:
            outcome = Outcome.PERMISSION_ERROR
        else:
            outcome = Outcome.SUCCESS
            revealed = (scenario.host_subnet == subnet_t) | (
                scenario.topology[subnet_t][scenario.host_subnet] > 0
            )
            n_dh = int(np.sum(revealed & (state.discovered == 0)))
            np.maximum(nxt.discovered, revealed.astype(np.uint8), out=nxt.discovered)
            np.maximum(nxt.reachable, revealed.astype(np.uint8), out=nxt.reachable)
    elif desc.kind == ActionKind.EXPLOIT:
        cost = config.exploit_cost
        runs_pair = bool(scenario.host_os[t, desc.os] and scenario.host_services[t, desc.payload])
        source_ok = bool(
            np.any(state.compromised_subnets & scenario.firewall[:, subnet_t, desc.payload])
        )
        if not state.reachable[t]:
            outcome = Outcome.CONNECTION_ERROR
        elif state.discovered[t] and runs_pair and source_ok:
            outcome = Outcome.SUCCESS
            nxt.access[t] = max(state.access[t], ACCESS_USER)
            nxt.compromised_subnets[subnet_t] = 1
        else:
            outcome = Outcome.UNDEFINED_ERROR
    else:  # PRIVESC
        cost = config.privesc_cost
        runs_pair = bool(scenario.host_os[t, desc.os] and scenario.host_processes[t, desc.payload])
        if not state.reachable[t]:
            outcome = Outcome.CONNECTION_ERROR
        elif state.access[t] < ACCESS_USER:
            outcome = Outcome.PERMISSION_ERROR
        elif runs_pair:
            outcome = Outcome.SUCCESS
            nxt.access[t] = ACCESS_ROOT
            nxt.compromised_subnets[subnet_t] = 1
        else:
            outcome = Outcome.UNDEFINED_ERROR

    reward = -float(cost)
    if outcome == Outcome.SUCCESS:
        if desc.kind == ActionKind.SUBNET_SCAN:
            reward += config.discovery_value * n_dh
        elif desc.kind == ActionKind.PRIVESC and scenario.host_sensitive[t] and not state.rooted_sensitive[t]:
            nxt.rooted_sensitive[t] = 1
            reward += config.host_value

    recent = _build_recent(layout, desc, outcome, nxt, scenario, subnet_t)
    aux = np.zeros(AUX_DIM, dtype=np.float32)
    aux[int(desc.kind)] = 1.0
    aux[N_ACTION_TYPES + int(outcome)] = 1.0
    obs = Observation(recent=recent, aux=aux)

    nxt.history = accumulate_history(nxt.history, flatten_recent(recent))
    nxt.step = state.step + 1
    nxt.done = _success_done(nxt) or nxt.step >= config.max_steps

    scaled = scale_reward(reward, scenario, config)
    info = {
        "outcome": outcome,
        "n_dh": n_dh,
        "reward_unscaled": reward,
        "reward_scaled": scaled,
        "success": _success_done(nxt),
        "descriptor": desc,
    }
    return nxt, agent_input(obs, nxt.history), (scaled if config.reward_scaling else reward), nxt.done, info


def _build_recent(
    layout: ObsLayout,
    desc: ActionDescriptor,
    outcome: Outcome,
    state: NetworkState,
    scenario: Scenario,
    subnet_t: int,
) -> np.ndarray:
    """Rows touched by the action, post-transition. Failures touch nothing."""
    recent = np.zeros((layout.n_hosts_total, layout.f_obs), dtype=np.float32)
    if outcome != Outcome.SUCCESS:
        return recent
    t = desc.host

    def mark_address(host: int) -> None:
        recent[host, layout.col_addr] = 1.0
        recent[host, layout.col_subnet + int(scenario.host_subnet[host])] = 1.0
        recent[host, layout.col_reachable] = float(state.reachable[host])
        recent[host, layout.col_discovered] = float(state.discovered[host])

    if desc.kind == ActionKind.SUBNET_SCAN:
        revealed = (scenario.host_subnet == subnet_t) | (
            scenario.topology[subnet_t][scenario.host_subnet] > 0
        )
        for h in np.flatnonzero(revealed):
            mark_address(int(h))
        return recent

    mark_address(t)
    if desc.kind == ActionKind.OS_SCAN:
        recent[t, layout.col_os : layout.col_os + layout.n_os] = scenario.host_os[t]
    elif desc.kind == ActionKind.SERVICE_SCAN:
        recent[t, layout.col_services : layout.col_services + layout.n_services] = scenario.host_services[t]
    elif desc.kind == ActionKind.PROCESS_SCAN:
        recent[t, layout.col_processes : layout.col_processes + layout.n_processes] = scenario.host_processes[t]
    elif desc.kind == ActionKind.EXPLOIT:
        recent[t, layout.col_os : layout.col_os + layout.n_os] = scenario.host_os[t]
        recent[t, layout.col_services + desc.payload] = 1.0
        recent[t, layout.col_sensitive] = float(scenario.host_sensitive[t])
        recent[t, layout.col_access_user] = float(state.access[t] >= ACCESS_USER)
        recent[t, layout.col_access_root] = float(state.access[t] >= ACCESS_ROOT)
    elif desc.kind == ActionKind.PRIVESC:
        recent[t, layout.col_os : layout.col_os + layout.n_os] = scenario.host_os[t]
        recent[t, layout.col_processes + desc.payload] = 1.0
        recent[t, layout.col_sensitive] = float(scenario.host_sensitive[t])
        recent[t, layout.col_access_user] = float(state.access[t] >= ACCESS_USER)
        recent[t, layout.col_access_root] = float(state.access[t] >= ACCESS_ROOT)
    return recent


def trajectory_record(action: int, info: dict, done: bool) -> dict:
    """One line of the trajectory dump format."""
    return {
        "action": int(action),
        "descriptor": descriptor_str(info["descriptor"]),
        "outcome": Outcome(info["outcome"]).name.lower(),
        "reward_unscaled": info["reward_unscaled"],
        "reward_scaled": info["reward_scaled"],
        "done": bool(done),
    }


def write_trajectory(records: list[dict], path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
