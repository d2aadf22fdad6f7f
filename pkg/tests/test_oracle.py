import numpy as np
import pytest

from pensim.actions import ActionKind, ActionSpaceSpec, compute_mask, encode_action
from pensim.config import EnvConfig, GenerationParams
from pensim.env import reset, step
from pensim.generation import generate_scenario
from pensim.oracle import InfeasibleScenarioError, count_active_hosts, replay_plan, solve
from tests.conftest import build_scenario


class TestSolve:
    def test_chain_fixture_plan_shape(self, chain_scenario, smoke_env_config):
        plan = solve(chain_scenario, smoke_env_config)
        kinds = [d.kind for d in plan.steps]
        assert kinds.count(ActionKind.SUBNET_SCAN) >= 2
        assert kinds.count(ActionKind.EXPLOIT) >= 2
        assert kinds.count(ActionKind.PRIVESC) == 1  # only the active sensitive host

    def test_replay_reaches_success(self, chain_scenario, smoke_env_config):
        plan = solve(chain_scenario, smoke_env_config)
        solved, total, records = replay_plan(chain_scenario, smoke_env_config, plan)
        assert solved
        assert total == plan.total_unscaled_reward
        assert records[-1]["done"]

    def test_sensitive_only_in_dmz_uses_dmz_only(self):
        scenario = build_scenario(
            n_subnets=3,
            topology_edges=[],
            hosts=[
                {"subnet": 1, "os": 0, "services": [0], "processes": [1], "sensitive": True},
                {"subnet": 2, "os": 1, "services": [1], "processes": [0], "sensitive": True},
            ],
        )
        cfg = EnvConfig(max_steps=30)
        plan = solve(scenario, cfg)
        targets = {d.host for d in plan.steps if d.kind != ActionKind.SUBNET_SCAN}
        assert targets == {0}  # host 1 sits in an unreachable subnet
        assert replay_plan(scenario, cfg, plan)[0]

    def test_no_active_sensitive_short_plan(self):
        scenario = build_scenario(
            n_subnets=3,
            topology_edges=[],
            hosts=[
                {"subnet": 1, "os": 0, "services": [0]},
                {"subnet": 2, "os": 0, "services": [0], "processes": [0], "sensitive": True},
            ],
        )
        cfg = EnvConfig(max_steps=30)
        plan = solve(scenario, cfg)
        assert len(plan.steps) == 1
        solved, total, _ = replay_plan(scenario, cfg, plan)
        assert solved and total == plan.total_unscaled_reward

    def test_infeasible_reported_with_host(self):
        # sensitive host with no process: cannot be escalated
        scenario = build_scenario(
            n_subnets=3,
            topology_edges=[],
            hosts=[{"subnet": 1, "os": 0, "services": [0], "processes": [], "sensitive": True},
                   {"subnet": 2, "os": 0, "services": [0]}],
        )
        with pytest.raises(InfeasibleScenarioError) as exc:
            solve(scenario, EnvConfig(max_steps=30))
        assert exc.value.host == 0

    def test_bulk_generated_scenarios_solvable(self, smoke_params, smoke_env_config):
        for seed in range(300):
            scenario = generate_scenario(smoke_params, seed)
            plan = solve(scenario, smoke_env_config)
            solved, total, _ = replay_plan(scenario, smoke_env_config, plan)
            assert solved
            assert total == plan.total_unscaled_reward

    def test_plan_actions_always_unmasked(self, smoke_params, smoke_env_config):
        spec = ActionSpaceSpec.from_params(smoke_params)
        for seed in range(60):
            scenario = generate_scenario(smoke_params, seed)
            plan = solve(scenario, smoke_env_config)
            state, _ = reset(scenario, smoke_env_config)
            for desc in plan.steps:
                action = encode_action(spec, desc)
                flat, _, _ = compute_mask(spec, state, scenario)
                assert flat[action], f"seed {seed}: masked plan action {desc}"
                state, _, _, done, _ = step(state, action, scenario, smoke_env_config)
                if done:
                    break


class TestCountActiveHosts:
    def test_zero_density_counts_dmz(self):
        params = GenerationParams(n_hosts=12, n_subnets=5, topology_density=0.0)
        scenario = generate_scenario(params, 3)
        dmz = int((scenario.host_subnet[:-1] == 1).sum())
        assert count_active_hosts(scenario) == dmz

    def test_full_density_counts_all(self):
        params = GenerationParams(n_hosts=12, n_subnets=5, topology_density=1.0)
        scenario = generate_scenario(params, 3)
        assert count_active_hosts(scenario) == 12

    def test_mean_between_extremes(self):
        means = {}
        for td in (0.04, 0.12, 0.2):
            params = GenerationParams(n_hosts=25, n_subnets=10, topology_density=td,
                                      sensitive_density=0.15)
            counts = [count_active_hosts(generate_scenario(params, s)) for s in range(300)]
            means[td] = float(np.mean(counts))
        assert means[0.04] < means[0.12] < means[0.2]
