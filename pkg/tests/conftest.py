import numpy as np
import pytest

from pensim.config import EnvConfig, GenerationParams
from pensim.generation import Scenario


@pytest.fixture
def smoke_params():
    return GenerationParams(
        n_hosts=7, n_subnets=4, topology_density=0.35, sensitive_density=0.35
    )


@pytest.fixture
def smoke_env_config():
    return EnvConfig(max_steps=40)


def build_scenario(
    n_subnets: int,
    topology_edges: list[tuple[int, int]],
    hosts: list[dict],
    n_os: int = 2,
    n_services: int = 3,
    n_processes: int = 3,
    seed: int = 0,
) -> Scenario:
    """Hand-built scenario. ``hosts`` entries: subnet, os, services, processes,
    sensitive. The attacker host is appended automatically."""
    n_hosts = len(hosts)
    params = GenerationParams(
        n_hosts=n_hosts,
        n_subnets=n_subnets,
        topology_density=0.0,
        n_os=n_os,
        n_services=n_services,
        n_processes=n_processes,
    )
    topology = np.eye(n_subnets, dtype=np.uint8)
    topology[0, 1] = 1
    for i, j in topology_edges:
        topology[i, j] = 1
    firewall = np.repeat(topology[:, :, None], n_services, axis=2)

    h = n_hosts + 1
    host_subnet = np.zeros(h, dtype=np.int16)
    host_os = np.zeros((h, n_os), dtype=np.uint8)
    host_services = np.zeros((h, n_services), dtype=np.uint8)
    host_processes = np.zeros((h, n_processes), dtype=np.uint8)
    host_sensitive = np.zeros(h, dtype=np.uint8)
    for i, spec in enumerate(hosts):
        host_subnet[i] = spec["subnet"]
        host_os[i, spec.get("os", 0)] = 1
        for s in spec.get("services", ()):
            host_services[i, s] = 1
        for p in spec.get("processes", ()):
            host_processes[i, p] = 1
        host_sensitive[i] = int(spec.get("sensitive", False))
    host_os[-1, 0] = 1  # attacker row
    return Scenario(
        params=params,
        seed=seed,
        topology=topology,
        firewall=firewall,
        host_subnet=host_subnet,
        host_os=host_os,
        host_services=host_services,
        host_processes=host_processes,
        host_sensitive=host_sensitive,
    )


@pytest.fixture
def chain_scenario():
    """internet -> dmz -> s2, with s3 unreachable. Three DMZ hosts so the
    first subnet scan discovers three hosts at once."""
    return build_scenario(
        n_subnets=4,
        topology_edges=[(1, 2)],
        hosts=[
            {"subnet": 1, "os": 0, "services": [0], "processes": []},
            {"subnet": 1, "os": 1, "services": [1], "processes": [2]},
            {"subnet": 1, "os": 0, "services": [], "processes": [0]},
            {"subnet": 2, "os": 1, "services": [2], "processes": [1], "sensitive": True},
            {"subnet": 3, "os": 0, "services": [0], "processes": [0], "sensitive": True},
        ],
    )
