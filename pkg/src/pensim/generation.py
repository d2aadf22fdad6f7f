"""Procedural network scenario generation.

A scenario is one concrete network: a directed subnet topology, per-edge
firewall permissions, and a host table (OS, vulnerable services/processes,
sensitivity). Generation is a pure function of (params, seed); each stage
draws from its own counter-based stream so stages stay independent.

Binary serialization layout (little-endian, version 1):

    magic    4s   b"PSCN"
    version  u16
    seed     u64
    n_hosts, n_subnets, n_os, n_services, n_processes   u32 each
    topology_density, service_density, process_density,
    sensitive_density, beta_concentration               f64 each
    homogeneous_subnets  u8
    attacker_host        u32
    topology       n_subnets * n_subnets                u8, row-major
    firewall       n_subnets * n_subnets * n_services   u8, row-major
    host_subnet    (n_hosts + 1)                        i16
    host_os        (n_hosts + 1) * n_os                 u8
    host_services  (n_hosts + 1) * n_services           u8
    host_processes (n_hosts + 1) * n_processes          u8
    host_sensitive (n_hosts + 1)                        u8
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .config import SUBNET_DMZ, SUBNET_INTERNET, GenerationParams
from .validation import ValidationError

_MAGIC = b"PSCN"
_BINARY_VERSION = 1


@dataclass(frozen=True)
class HostRecord:
    """Single-host view over the columnar scenario tables."""

    subnet: int
    os: np.ndarray
    services: np.ndarray
    processes: np.ndarray
    sensitive: bool


@dataclass(frozen=True)
class Scenario:
    """One generated network context. Host index ``attacker_host`` (the last
    row) is the attacker's machine: internet subnet, no services, never
    sensitive."""

    params: GenerationParams
    seed: int
    topology: np.ndarray  # (N_s, N_s) uint8, directed; diagonal all ones
    firewall: np.ndarray  # (N_s, N_s, n_services) uint8
    host_subnet: np.ndarray  # (H,) int16
    host_os: np.ndarray  # (H, n_os) uint8 one-hot
    host_services: np.ndarray  # (H, n_services) uint8
    host_processes: np.ndarray  # (H, n_processes) uint8
    host_sensitive: np.ndarray  # (H,) uint8

    @property
    def n_hosts_total(self) -> int:
        return self.params.n_hosts + 1

    @property
    def attacker_host(self) -> int:
        return self.params.n_hosts

    def host(self, i: int) -> HostRecord:
        return HostRecord(
            subnet=int(self.host_subnet[i]),
            os=self.host_os[i],
            services=self.host_services[i],
            processes=self.host_processes[i],
            sensitive=bool(self.host_sensitive[i]),
        )


def distribute_hosts(params: GenerationParams, rng: np.random.Generator) -> np.ndarray:
    """Assign the generated hosts to subnets.

    Every non-internet subnet receives at least one host; the internet subnet
    receives none (the attacker machine is appended separately).
    """
    params.validate()
    n_open = params.n_subnets - 1
    # One guaranteed host per subnet, remainder uniform.
    assignment = np.empty(params.n_hosts, dtype=np.int16)
    assignment[:n_open] = np.arange(1, params.n_subnets, dtype=np.int16)
    assignment[n_open:] = rng.integers(1, params.n_subnets, size=params.n_hosts - n_open, dtype=np.int16)
    rng.shuffle(assignment)
    return assignment


def assign_host_properties(
    assignment: np.ndarray, params: GenerationParams, rng: np.random.Generator
) -> dict[str, np.ndarray]:
    """Sample OS, service, process, and sensitivity bits for the generated hosts."""
    n = len(assignment)
    os_idx = rng.integers(0, params.n_os, size=n)
    host_os = np.zeros((n, params.n_os), dtype=np.uint8)
    host_os[np.arange(n), os_idx] = 1

    if params.homogeneous_subnets:
        services = _sample_homogeneous(
            assignment, params.n_subnets, params.n_services,
            params.service_density, params.beta_concentration, rng,
        )
        processes = _sample_homogeneous(
            assignment, params.n_subnets, params.n_processes,
            params.process_density, params.beta_concentration, rng,
        )
    else:
        services = (rng.random((n, params.n_services)) < params.service_density).astype(np.uint8)
        processes = (rng.random((n, params.n_processes)) < params.process_density).astype(np.uint8)

    sensitive = (rng.random(n) < params.sensitive_density).astype(np.uint8)
    return {
        "host_os": host_os,
        "host_services": services,
        "host_processes": processes,
        "host_sensitive": sensitive,
    }


def _sample_homogeneous(
    assignment: np.ndarray,
    n_subnets: int,
    width: int,
    density: float,
    concentration: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Per-subnet success probabilities drawn from a mean-preserving Beta,
    then per-host Bernoulli draws. Degenerate densities skip the Beta."""
    if 0.0 < density < 1.0:
        alpha = density * concentration
        beta = (1.0 - density) * concentration
        p = rng.beta(alpha, beta, size=(n_subnets, width))
    else:
        p = np.full((n_subnets, width), density)
    return (rng.random((len(assignment), width)) < p[assignment]).astype(np.uint8)


def enforce_feasibility(
    hosts: dict[str, np.ndarray],
    assignment: np.ndarray,
    params: GenerationParams,
    rng: np.random.Generator,
) -> dict[str, np.ndarray]:
    """Repair the host table so every scenario is solvable.

    Guarantees: each non-internet subnet has a host with at least one
    service, and each sensitive host runs at least one service and one
    process. Repairs add the minimal number of bits, chosen uniformly at
    random; feasible tables pass through untouched.
    """
    services = hosts["host_services"]
    processes = hosts["host_processes"]
    sensitive = hosts["host_sensitive"]
    out_services = services.copy()
    out_processes = processes.copy()

    for h in np.flatnonzero(sensitive):
        if out_services[h].sum() == 0:
            out_services[h, rng.integers(0, params.n_services)] = 1
        if out_processes[h].sum() == 0:
            out_processes[h, rng.integers(0, params.n_processes)] = 1

    for subnet in range(1, params.n_subnets):
        members = np.flatnonzero(assignment == subnet)
        if out_services[members].sum() == 0:
            victim = members[rng.integers(0, len(members))]
            out_services[victim, rng.integers(0, params.n_services)] = 1

    if np.array_equal(out_services, services) and np.array_equal(out_processes, processes):
        return hosts
    repaired = dict(hosts)
    repaired["host_services"] = out_services
    repaired["host_processes"] = out_processes
    return repaired


def generate_topology(
    params: GenerationParams, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Sample the directed subnet adjacency and the firewall tensor.

    Edges are independent Bernoulli(topology_density) draws, not required to
    be symmetric. The diagonal is forced on, and the internet subnet is
    restricted to a single outgoing edge into the DMZ with no incoming edges.
    The firewall permits every service on every existing edge; restrictive
    rules are a config extension, the tensor is kept so state shapes do not
    change.
    """
    n = params.n_subnets
    topology = (rng.random((n, n)) < params.topology_density).astype(np.uint8)
    np.fill_diagonal(topology, 1)
    topology[SUBNET_INTERNET, :] = 0
    topology[:, SUBNET_INTERNET] = 0
    topology[SUBNET_INTERNET, SUBNET_INTERNET] = 1
    topology[SUBNET_INTERNET, SUBNET_DMZ] = 1
    firewall = np.repeat(topology[:, :, None], params.n_services, axis=2)
    return topology, firewall


def active_subnets(scenario: Scenario) -> np.ndarray:
    """Boolean vector: subnet reachable from the internet via directed edges."""
    return reachable_subnets(scenario.topology)


def reachable_subnets(topology: np.ndarray) -> np.ndarray:
    n = topology.shape[0]
    active = np.zeros(n, dtype=bool)
    frontier = [SUBNET_INTERNET]
    active[SUBNET_INTERNET] = True
    while frontier:
        i = frontier.pop()
        for j in np.flatnonzero(topology[i]):
            if not active[j]:
                active[j] = True
                frontier.append(int(j))
    return active


def generate_scenario(params: GenerationParams, seed: int) -> Scenario:
    """Full generation pipeline; deterministic in (params, seed)."""
    params.validate()
    assignment = distribute_hosts(params, rngmod.stream(seed, rngmod.STREAM_DISTRIBUTE))
    hosts = assign_host_properties(assignment, params, rngmod.stream(seed, rngmod.STREAM_PROPERTIES))
    hosts = enforce_feasibility(hosts, assignment, params, rngmod.stream(seed, rngmod.STREAM_FEASIBILITY))
    topology, firewall = generate_topology(params, rngmod.stream(seed, rngmod.STREAM_TOPOLOGY))

    h = params.n_hosts_total
    host_subnet = np.empty(h, dtype=np.int16)
    host_subnet[:-1] = assignment
    host_subnet[-1] = SUBNET_INTERNET

    host_os = np.zeros((h, params.n_os), dtype=np.uint8)
    host_os[:-1] = hosts["host_os"]
    host_os[-1, 0] = 1  # attacker machine needs a defined OS row; it is never a target

    host_services = np.zeros((h, params.n_services), dtype=np.uint8)
    host_services[:-1] = hosts["host_services"]
    host_processes = np.zeros((h, params.n_processes), dtype=np.uint8)
    host_processes[:-1] = hosts["host_processes"]
    host_sensitive = np.zeros(h, dtype=np.uint8)
    host_sensitive[:-1] = hosts["host_sensitive"]

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


_HEADER = struct.Struct("<4sHQ5I5dBI")


def scenario_to_bytes(scenario: Scenario) -> bytes:
    p = scenario.params
    header = _HEADER.pack(
        _MAGIC,
        _BINARY_VERSION,
        scenario.seed,
        p.n_hosts,
        p.n_subnets,
        p.n_os,
        p.n_services,
        p.n_processes,
        p.topology_density,
        p.service_density,
        p.process_density,
        p.sensitive_density,
        p.beta_concentration,
        int(p.homogeneous_subnets),
        scenario.attacker_host,
    )
    parts = [
        header,
        scenario.topology.tobytes(),
        scenario.firewall.tobytes(),
        scenario.host_subnet.astype("<i2").tobytes(),
        scenario.host_os.tobytes(),
        scenario.host_services.tobytes(),
        scenario.host_processes.tobytes(),
        scenario.host_sensitive.tobytes(),
    ]
    return b"".join(parts)


def scenario_from_bytes(data: bytes) -> Scenario:
    if len(data) < _HEADER.size:
        raise ValidationError("scenario blob truncated")
    (
        magic, version, seed,
        n_hosts, n_subnets, n_os, n_services, n_processes,
        td, svc_d, proc_d, s_d, kappa,
        homogeneous, attacker_host,
    ) = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise ValidationError("bad scenario magic")
    if version != _BINARY_VERSION:
        raise ValidationError(f"unsupported scenario version {version}")
    params = GenerationParams(
        n_hosts=n_hosts,
        n_subnets=n_subnets,
        topology_density=td,
        service_density=svc_d,
        process_density=proc_d,
        sensitive_density=s_d,
        n_os=n_os,
        n_services=n_services,
        n_processes=n_processes,
        homogeneous_subnets=bool(homogeneous),
        beta_concentration=kappa,
    )
    h = n_hosts + 1
    sizes = [
        ("topology", (n_subnets, n_subnets), np.uint8),
        ("firewall", (n_subnets, n_subnets, n_services), np.uint8),
        ("host_subnet", (h,), np.dtype("<i2")),
        ("host_os", (h, n_os), np.uint8),
        ("host_services", (h, n_services), np.uint8),
        ("host_processes", (h, n_processes), np.uint8),
        ("host_sensitive", (h,), np.uint8),
    ]
    offset = _HEADER.size
    arrays = {}
    for name, shape, dtype in sizes:
        nbytes = int(np.prod(shape)) * np.dtype(dtype).itemsize
        chunk = data[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise ValidationError(f"scenario blob truncated in {name}")
        arrays[name] = np.frombuffer(chunk, dtype=dtype).reshape(shape).copy()
        offset += nbytes
    if offset != len(data):
        raise ValidationError("trailing bytes in scenario blob")
    if attacker_host != n_hosts:
        raise ValidationError("attacker host index mismatch")
    arrays["host_subnet"] = arrays["host_subnet"].astype(np.int16)
    return Scenario(params=params, seed=seed, **arrays)


def scenario_to_text(scenario: Scenario) -> str:
    """Human-readable dump, stable across runs; used for debugging and goldens."""
    p = scenario.params
    lines = [
        f"scenario seed={scenario.seed} hosts={p.n_hosts}+attacker subnets={p.n_subnets}",
        f"densities td={p.topology_density} svc={p.service_density} "
        f"proc={p.process_density} sens={p.sensitive_density}",
        "topology (row -> col):",
    ]
    for i in range(p.n_subnets):
        row = "".join(str(int(v)) for v in scenario.topology[i])
        lines.append(f"  {i}: {row}")
    active = active_subnets(scenario)
    lines.append("subnets: " + " ".join(
        f"{i}{'*' if active[i] else ''}" for i in range(p.n_subnets)
    ) + "  (* = reachable from internet)")
    for i in range(scenario.n_hosts_total):
        rec = scenario.host(i)
        tag = " attacker" if i == scenario.attacker_host else ""
        sens = " sensitive" if rec.sensitive else ""
        os_ix = int(np.argmax(rec.os))
        svc = "".join(str(int(v)) for v in rec.services)
        proc = "".join(str(int(v)) for v in rec.processes)
        lines.append(f"host {i}: subnet={rec.subnet} os={os_ix} svc={svc} proc={proc}{sens}{tag}")
    return "\n".join(lines) + "\n"
