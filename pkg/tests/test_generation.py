import dataclasses

import numpy as np
import pytest

from pensim import rng as rngmod
from pensim.config import SUBNET_DMZ, SUBNET_INTERNET, GenerationParams
from pensim.generation import (
    active_subnets,
    assign_host_properties,
    distribute_hosts,
    enforce_feasibility,
    generate_scenario,
    generate_topology,
    scenario_from_bytes,
    scenario_to_bytes,
    scenario_to_text,
)
from pensim.validation import ValidationError


def _rng(seed=0, sid=1):
    return rngmod.stream(seed, sid)


class TestDistributeHosts:
    def test_pigeonhole_two_hosts_three_subnets(self):
        params = GenerationParams(n_hosts=2, n_subnets=3, topology_density=0.1)
        assignment = distribute_hosts(params, _rng())
        assert sorted(assignment.tolist()) == [1, 2]

    def test_every_open_subnet_nonempty(self):
        params = GenerationParams(n_hosts=26, n_subnets=10, topology_density=0.1)
        assignment = distribute_hosts(params, _rng(42))
        assert len(assignment) == 26
        assert set(assignment.tolist()) == set(range(1, 10))
        assert (assignment != SUBNET_INTERNET).all()

    def test_deterministic(self):
        params = GenerationParams(n_hosts=26, n_subnets=10, topology_density=0.1)
        a = distribute_hosts(params, _rng(42))
        b = distribute_hosts(params, _rng(42))
        assert np.array_equal(a, b)

    def test_too_few_hosts_rejected(self):
        with pytest.raises(ValidationError):
            GenerationParams(n_hosts=2, n_subnets=4, topology_density=0.1).validate()


class TestAssignProperties:
    def test_degenerate_density_one(self):
        params = GenerationParams(n_hosts=50, n_subnets=3, topology_density=0.1,
                                  service_density=1.0)
        assignment = distribute_hosts(params, _rng())
        hosts = assign_host_properties(assignment, params, _rng(1, 2))
        assert hosts["host_services"].all()

    def test_degenerate_sensitive_zero(self):
        params = GenerationParams(n_hosts=50, n_subnets=3, topology_density=0.1,
                                  sensitive_density=0.0)
        assignment = distribute_hosts(params, _rng())
        hosts = assign_host_properties(assignment, params, _rng(1, 2))
        assert hosts["host_sensitive"].sum() == 0

    def test_exactly_one_os(self):
        params = GenerationParams(n_hosts=200, n_subnets=5, topology_density=0.1)
        assignment = distribute_hosts(params, _rng())
        hosts = assign_host_properties(assignment, params, _rng(3, 2))
        assert (hosts["host_os"].sum(axis=1) == 1).all()

    def test_bernoulli_mean(self):
        # 1e5 hosts at density 0.7 over 3 services: mean services/host 2.1 +- 3 sigma
        params = GenerationParams(n_hosts=100_000, n_subnets=3, topology_density=0.1,
                                  service_density=0.7)
        assignment = distribute_hosts(params, _rng())
        hosts = assign_host_properties(assignment, params, _rng(7, 2))
        mean = hosts["host_services"].sum() / params.n_hosts
        sigma = np.sqrt(3 * 0.7 * 0.3 / params.n_hosts)
        assert abs(mean - 2.1) < 3 * sigma

    def test_homogeneous_mode_preserves_mean(self):
        params = GenerationParams(n_hosts=100_000, n_subnets=12, topology_density=0.1,
                                  service_density=0.7, homogeneous_subnets=True,
                                  beta_concentration=10.0)
        assignment = distribute_hosts(params, _rng())
        hosts = assign_host_properties(assignment, params, _rng(11, 2))
        mean = hosts["host_services"].mean()
        assert abs(mean - 0.7) < 0.02

    def test_homogeneous_mode_increases_within_subnet_correlation(self):
        params = GenerationParams(n_hosts=30_000, n_subnets=30, topology_density=0.1,
                                  service_density=0.5, homogeneous_subnets=True,
                                  beta_concentration=2.0)
        assignment = distribute_hosts(params, _rng())
        hosts = assign_host_properties(assignment, params, _rng(13, 2))
        svc0 = hosts["host_services"][:, 0].astype(float)
        within = np.var([svc0[assignment == s].mean() for s in range(1, 30)])
        # heterogeneous draws would concentrate subnet means around 0.5
        het = assign_host_properties(
            assignment, dataclasses.replace(params, homogeneous_subnets=False), _rng(13, 3)
        )["host_services"][:, 0].astype(float)
        within_het = np.var([het[assignment == s].mean() for s in range(1, 30)])
        assert within > 3 * within_het


class TestFeasibility:
    def test_serviceless_subnet_gains_one_bit(self, smoke_params):
        params = dataclasses.replace(smoke_params, service_density=0.0, sensitive_density=0.0)
        assignment = distribute_hosts(params, _rng())
        hosts = assign_host_properties(assignment, params, _rng(1, 2))
        repaired = enforce_feasibility(hosts, assignment, params, _rng(1, 3))
        for subnet in range(1, params.n_subnets):
            members = assignment == subnet
            assert repaired["host_services"][members].sum() == 1

    def test_sensitive_host_gains_service_and_process(self, smoke_params):
        params = dataclasses.replace(
            smoke_params, service_density=0.0, process_density=0.0, sensitive_density=1.0
        )
        assignment = distribute_hosts(params, _rng())
        hosts = assign_host_properties(assignment, params, _rng(2, 2))
        repaired = enforce_feasibility(hosts, assignment, params, _rng(2, 3))
        assert (repaired["host_services"].sum(axis=1) >= 1).all()
        assert (repaired["host_processes"].sum(axis=1) >= 1).all()
        assert (repaired["host_services"].sum(axis=1) == 1).all()
        assert (repaired["host_processes"].sum(axis=1) == 1).all()

    def test_feasible_table_untouched(self, smoke_params):
        params = dataclasses.replace(smoke_params, service_density=1.0, process_density=1.0)
        assignment = distribute_hosts(params, _rng())
        hosts = assign_host_properties(assignment, params, _rng(3, 2))
        repaired = enforce_feasibility(hosts, assignment, params, _rng(3, 3))
        assert repaired is hosts


class TestTopology:
    def test_zero_density(self):
        params = GenerationParams(n_hosts=9, n_subnets=10, topology_density=0.0)
        topology, firewall = generate_topology(params, _rng())
        expected = np.eye(10, dtype=np.uint8)
        expected[SUBNET_INTERNET, SUBNET_DMZ] = 1
        assert np.array_equal(topology, expected)
        assert np.array_equal(firewall, np.repeat(topology[:, :, None], 3, axis=2))

    def test_full_density(self):
        params = GenerationParams(n_hosts=9, n_subnets=10, topology_density=1.0)
        topology, _ = generate_topology(params, _rng())
        assert topology[1:, 1:].all()
        assert topology[SUBNET_INTERNET].sum() == 2  # diagonal + DMZ
        assert topology[1:, SUBNET_INTERNET].sum() == 0

    def test_edge_frequency(self):
        # off-diagonal non-internet edges appear with the configured density
        params = GenerationParams(n_hosts=9, n_subnets=10, topology_density=0.12)
        count = 0
        trials = 10_000
        n_free = 9 * 8  # off-diagonal cells among non-internet subnets
        for seed in range(trials):
            topology, _ = generate_topology(params, _rng(seed, 4))
            block = topology[1:, 1:].astype(int)
            count += block.sum() - 9  # subtract the forced diagonal
        freq = count / (trials * n_free)
        assert abs(freq - 0.12) < 0.01


class TestActiveSubnets:
    def test_zero_density_active_set(self):
        params = GenerationParams(n_hosts=9, n_subnets=10, topology_density=0.0)
        scenario = generate_scenario(params, 5)
        active = active_subnets(scenario)
        assert active[SUBNET_INTERNET] and active[SUBNET_DMZ]
        assert active.sum() == 2

    def test_full_density_all_active(self):
        params = GenerationParams(n_hosts=9, n_subnets=10, topology_density=1.0)
        scenario = generate_scenario(params, 5)
        assert active_subnets(scenario).all()

    def test_chain_reachability(self, chain_scenario):
        active = active_subnets(chain_scenario)
        assert active.tolist() == [True, True, True, False]


class TestGenerateScenario:
    def test_invariants_hold(self, smoke_params):
        for seed in range(200):
            s = generate_scenario(smoke_params, seed)
            assert np.diagonal(s.topology).all()
            assert s.topology[SUBNET_INTERNET].sum() == 2
            assert s.topology[1:, SUBNET_INTERNET].sum() == 0
            # firewall only permits services over existing edges
            assert not np.any(s.firewall & ~s.topology[:, :, None])
            # internet subnet holds exactly the attacker host
            assert (s.host_subnet == SUBNET_INTERNET).sum() == 1
            assert s.host_subnet[s.attacker_host] == SUBNET_INTERNET
            assert s.host_sensitive[s.attacker_host] == 0
            assert s.host_services[s.attacker_host].sum() == 0
            assert (s.host_os.sum(axis=1) == 1).all()
            # every open subnet pivotable, every sensitive host escalatable
            for subnet in range(1, smoke_params.n_subnets):
                members = s.host_subnet == subnet
                assert s.host_services[members].sum() >= 1
            sens = s.host_sensitive > 0
            assert (s.host_services[sens].sum(axis=1) >= 1).all()
            assert (s.host_processes[sens].sum(axis=1) >= 1).all()

    def test_deterministic(self, smoke_params):
        a = generate_scenario(smoke_params, 77)
        b = generate_scenario(smoke_params, 77)
        assert scenario_to_bytes(a) == scenario_to_bytes(b)

    def test_density_monotone_in_active_hosts(self):
        from pensim.oracle import count_active_hosts

        means = []
        for td in (0.04, 0.2):
            params = GenerationParams(n_hosts=25, n_subnets=10, topology_density=td,
                                      sensitive_density=0.15)
            counts = [count_active_hosts(generate_scenario(params, seed)) for seed in range(400)]
            means.append(np.mean(counts))
        assert means[1] > means[0]


class TestSerialization:
    def test_binary_roundtrip(self, smoke_params):
        s = generate_scenario(smoke_params, 31)
        s2 = scenario_from_bytes(scenario_to_bytes(s))
        assert scenario_to_bytes(s2) == scenario_to_bytes(s)
        assert s2.params == s.params
        assert np.array_equal(s2.topology, s.topology)
        assert np.array_equal(s2.host_services, s.host_services)

    def test_binary_rejects_garbage(self):
        with pytest.raises(ValidationError):
            scenario_from_bytes(b"not a scenario")
        s = generate_scenario(GenerationParams(n_hosts=3, n_subnets=3, topology_density=0.5), 1)
        blob = scenario_to_bytes(s)
        with pytest.raises(ValidationError):
            scenario_from_bytes(blob[:-4])
        with pytest.raises(ValidationError):
            scenario_from_bytes(blob + b"xx")

    def test_text_dump_stable(self, chain_scenario):
        text = scenario_to_text(chain_scenario)
        assert text == scenario_to_text(chain_scenario)
        assert "subnet" in text and "attacker" in text
