"""Action space construction, encoding, and validity masking.

Actions are instantiated per target host. Within a host's block the layout is
four scans, then exploits in (os, service) lexicographic order, then
privilege escalations in (os, process) order. The flat index of an action is
``host * per_host_actions + offset``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .config import GenerationParams
from .generation import Scenario
from .validation import ValidationError, check_index

N_SCAN_TYPES = 4


class ActionKind(IntEnum):
    OS_SCAN = 0
    SERVICE_SCAN = 1
    PROCESS_SCAN = 2
    SUBNET_SCAN = 3
    EXPLOIT = 4
    PRIVESC = 5


SCAN_KINDS = (
    ActionKind.OS_SCAN,
    ActionKind.SERVICE_SCAN,
    ActionKind.PROCESS_SCAN,
    ActionKind.SUBNET_SCAN,
)


@dataclass(frozen=True)
class ActionSpaceSpec:
    """Shape of the flat and factored action spaces for one configuration."""

    n_hosts_total: int
    n_os: int
    n_services: int
    n_processes: int

    @classmethod
    def from_params(cls, params: GenerationParams) -> "ActionSpaceSpec":
        return cls(
            n_hosts_total=params.n_hosts_total,
            n_os=params.n_os,
            n_services=params.n_services,
            n_processes=params.n_processes,
        )

    @property
    def n_scan_types(self) -> int:
        return N_SCAN_TYPES

    @property
    def per_host_actions(self) -> int:
        return N_SCAN_TYPES + self.n_os * (self.n_services + self.n_processes)

    @property
    def total_actions(self) -> int:
        return self.n_hosts_total * self.per_host_actions


@dataclass(frozen=True)
class ActionDescriptor:
    host: int
    kind: ActionKind
    os: int | None = None
    payload: int | None = None  # service index for exploits, process index for privescs


def action_count(spec: ActionSpaceSpec) -> int:
    return spec.total_actions


def decode_action(spec: ActionSpaceSpec, index: int) -> ActionDescriptor:
    check_index(index, spec.total_actions, "action index")
    host, offset = divmod(int(index), spec.per_host_actions)
    if offset < N_SCAN_TYPES:
        return ActionDescriptor(host=host, kind=ActionKind(offset))
    offset -= N_SCAN_TYPES
    n_exploits = spec.n_os * spec.n_services
    if offset < n_exploits:
        os_ix, svc = divmod(offset, spec.n_services)
        return ActionDescriptor(host=host, kind=ActionKind.EXPLOIT, os=os_ix, payload=svc)
    offset -= n_exploits
    os_ix, proc = divmod(offset, spec.n_processes)
    return ActionDescriptor(host=host, kind=ActionKind.PRIVESC, os=os_ix, payload=proc)


def encode_action(spec: ActionSpaceSpec, desc: ActionDescriptor) -> int:
    check_index(desc.host, spec.n_hosts_total, "host")
    if desc.kind in SCAN_KINDS:
        if desc.os is not None or desc.payload is not None:
            raise ValidationError("scan actions carry no os/payload")
        offset = int(desc.kind)
    elif desc.kind == ActionKind.EXPLOIT:
        check_index(desc.os, spec.n_os, "os")
        check_index(desc.payload, spec.n_services, "service")
        offset = N_SCAN_TYPES + desc.os * spec.n_services + desc.payload
    elif desc.kind == ActionKind.PRIVESC:
        check_index(desc.os, spec.n_os, "os")
        check_index(desc.payload, spec.n_processes, "process")
        offset = N_SCAN_TYPES + spec.n_os * spec.n_services + desc.os * spec.n_processes + desc.payload
    else:
        raise ValidationError(f"unknown action kind {desc.kind!r}")
    return desc.host * spec.per_host_actions + offset


def static_action_validity(spec: ActionSpaceSpec, scenario: Scenario) -> np.ndarray:
    """(H, A_h) validity of per-host actions against the host configuration.

    Scans are always valid; an exploit requires the host to run exactly that
    (os, service) pair, a privilege escalation that (os, process) pair. This
    half of the mask is static for the lifetime of a scenario.
    """
    h = spec.n_hosts_total
    valid = np.empty((h, spec.per_host_actions), dtype=np.uint8)
    valid[:, :N_SCAN_TYPES] = 1
    exploits = (scenario.host_os[:, :, None] & scenario.host_services[:, None, :]).reshape(h, -1)
    privescs = (scenario.host_os[:, :, None] & scenario.host_processes[:, None, :]).reshape(h, -1)
    valid[:, N_SCAN_TYPES : N_SCAN_TYPES + exploits.shape[1]] = exploits
    valid[:, N_SCAN_TYPES + exploits.shape[1] :] = privescs
    return valid


def compute_mask(
    spec: ActionSpaceSpec, state, scenario: Scenario
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Validity masks for the current state.

    Returns ``(flat, host_mask, per_host)``: the flat (|A|,) mask, the
    factored (H,) host mask, and the (H, A_h) per-host action mask. A host is
    masked only when it is both undiscovered and unreachable; actions that
    would merely fail on privilege are left unmasked so the failure stays
    learnable. The flat mask is the outer AND of the two factored masks.
    """
    host_mask = (state.discovered | state.reachable).astype(np.uint8)
    per_host = static_action_validity(spec, scenario)
    flat = (host_mask[:, None] & per_host).reshape(-1)
    return flat, host_mask, per_host


def descriptor_str(desc: ActionDescriptor) -> str:
    if desc.kind in SCAN_KINDS:
        return f"{desc.kind.name.lower()}(host={desc.host})"
    field = "svc" if desc.kind == ActionKind.EXPLOIT else "proc"
    return f"{desc.kind.name.lower()}(host={desc.host}, os={desc.os}, {field}={desc.payload})"


# Per-offset decode tables, used by the batched engine to vectorize dispatch.
def offset_tables(spec: ActionSpaceSpec) -> dict[str, np.ndarray]:
    a_h = spec.per_host_actions
    kind = np.empty(a_h, dtype=np.int8)
    os_ix = np.zeros(a_h, dtype=np.int16)
    payload = np.zeros(a_h, dtype=np.int16)
    for w in range(a_h):
        d = decode_action(spec, w)
        kind[w] = int(d.kind)
        os_ix[w] = -1 if d.os is None else d.os
        payload[w] = -1 if d.payload is None else d.payload
    return {"kind": kind, "os": os_ix, "payload": payload}
