"""Brute-force attack planner used to certify that scenarios are solvable.

The planner reasons directly over the static scenario graph (it never calls
the environment), expanding subnets breadth-first from the internet: exploit
one service-bearing host per subnet, scan from it to reveal the next ring,
then root every sensitive host in reach. Plans are greedy, not optimal; they
exist to certify solvability and to provide ground truth for tests, which
replay them through the environment step function.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .actions import ActionDescriptor, ActionKind, ActionSpaceSpec, encode_action
from .config import SUBNET_INTERNET, EnvConfig
from .env import reset, step, trajectory_record
from .generation import Scenario, reachable_subnets


class InfeasibleScenarioError(Exception):
    """A sensitive host cannot be rooted; this signals a generator bug."""

    def __init__(self, host: int, reason: str):
        self.host = host
        self.reason = reason
        super().__init__(f"host {host}: {reason}")


@dataclass
class AttackPlan:
    steps: list[ActionDescriptor] = field(default_factory=list)
    total_unscaled_reward: float = 0.0


def count_active_hosts(scenario: Scenario) -> int:
    """Hosts (excluding the attacker machine) whose subnet is reachable from
    the internet."""
    active = reachable_subnets(scenario.topology)
    return int(np.sum(active[scenario.host_subnet[: scenario.attacker_host]]))


def _exploit_for(scenario: Scenario, host: int) -> ActionDescriptor:
    services = np.flatnonzero(scenario.host_services[host])
    if len(services) == 0:
        raise InfeasibleScenarioError(host, "no exploitable service")
    os_ix = int(np.argmax(scenario.host_os[host]))
    return ActionDescriptor(host=host, kind=ActionKind.EXPLOIT, os=os_ix, payload=int(services[0]))


def _privesc_for(scenario: Scenario, host: int) -> ActionDescriptor:
    procs = np.flatnonzero(scenario.host_processes[host])
    if len(procs) == 0:
        raise InfeasibleScenarioError(host, "no exploitable process")
    os_ix = int(np.argmax(scenario.host_os[host]))
    return ActionDescriptor(host=host, kind=ActionKind.PRIVESC, os=os_ix, payload=int(procs[0]))


def solve(scenario: Scenario, config: EnvConfig) -> AttackPlan:
    """Greedy frontier-expansion plan that roots every active sensitive host.

    Raises InfeasibleScenarioError when some active sensitive host cannot be
    reached or exploited.
    """
    topo = scenario.topology
    plan = AttackPlan()
    atk = scenario.attacker_host
    active = reachable_subnets(topo)
    targets = np.flatnonzero(scenario.host_sensitive & active[scenario.host_subnet])

    discovered = np.zeros(scenario.n_hosts_total, dtype=bool)
    discovered[atk] = True
    user_access = {atk}

    def subnet_scan(host: int) -> None:
        subnet = int(scenario.host_subnet[host])
        revealed = (scenario.host_subnet == subnet) | (topo[subnet][scenario.host_subnet] > 0)
        n_new = int(np.sum(revealed & ~discovered))
        discovered[revealed] = True
        plan.steps.append(ActionDescriptor(host=host, kind=ActionKind.SUBNET_SCAN))
        plan.total_unscaled_reward += -config.scan_cost + config.discovery_value * n_new

    # Ring 0: scan from the attacker machine; reveals the DMZ. With no
    # targets the episode terminates on this first step, so stop there too.
    subnet_scan(atk)
    if len(targets) == 0:
        return plan
    queue = deque(sorted(int(j) for j in np.flatnonzero(topo[SUBNET_INTERNET]) if j != SUBNET_INTERNET))
    seen = set(queue) | {SUBNET_INTERNET}

    while queue:
        subnet = queue.popleft()
        members = np.flatnonzero(scenario.host_subnet == subnet)
        with_service = [int(h) for h in members if scenario.host_services[h].sum() > 0]
        if not with_service:
            # unreachable-in-practice subnet; fatal only if it holds a target
            sensitive_here = [int(h) for h in members if scenario.host_sensitive[h]]
            if sensitive_here:
                raise InfeasibleScenarioError(sensitive_here[0], "subnet has no exploitable pivot")
            continue
        pivot = with_service[0]
        plan.steps.append(_exploit_for(scenario, pivot))
        plan.total_unscaled_reward += -config.exploit_cost
        user_access.add(pivot)
        subnet_scan(pivot)
        for j in sorted(int(k) for k in np.flatnonzero(topo[subnet])):
            if j not in seen:
                seen.add(j)
                queue.append(j)

    for host in targets:
        host = int(host)
        if not discovered[host]:
            raise InfeasibleScenarioError(host, "active sensitive host never discovered")
        if host not in user_access:
            plan.steps.append(_exploit_for(scenario, host))
            plan.total_unscaled_reward += -config.exploit_cost
            user_access.add(host)
        plan.steps.append(_privesc_for(scenario, host))
        plan.total_unscaled_reward += -config.privesc_cost + config.host_value

    if len(plan.steps) > config.max_steps:
        raise InfeasibleScenarioError(-1, f"plan needs {len(plan.steps)} steps > budget {config.max_steps}")
    return plan


def replay_plan(
    scenario: Scenario, config: EnvConfig, plan: AttackPlan
) -> tuple[bool, float, list[dict]]:
    """Run a plan through the environment. Returns (solved, total unscaled
    reward, trajectory records)."""
    spec = ActionSpaceSpec.from_params(scenario.params)
    state, _ = reset(scenario, config)
    total = 0.0
    records = []
    done = False
    for desc in plan.steps:
        action = encode_action(spec, desc)
        state, _, _, done, info = step(state, action, scenario, config)
        total += info["reward_unscaled"]
        records.append(trajectory_record(action, info, done))
        if done:
            break
    solved = done and bool(np.all(state.rooted_sensitive >= state.target_hosts))
    return solved, total, records
