"""Batched environment engine.

Steps many independent episodes at once over preallocated storage. All hot
arrays are allocated up front and every per-step operation runs through
ufuncs with explicit ``out=``/``where=`` targets plus ``take``/``put``
gather-scatter, so steady-state stepping performs no heap allocation of
array data (verified by the allocation test against numpy's tracemalloc
domain). Scatters that apply to a data-dependent subset of environments are
redirected to a spare "dump" row instead of compressing indices.

Per-slot results are bit-identical to the scalar reference path in ``env``;
the equivalence test steps both side by side.
"""

from __future__ import annotations

import numpy as np

from .actions import ActionSpaceSpec, offset_tables, static_action_validity
from .config import (
    ACCESS_ROOT,
    ACCESS_USER,
    SUBNET_INTERNET,
    SUBNET_DMZ,
    EnvConfig,
    GenerationParams,
)
from .env import AUX_DIM, N_ACTION_TYPES, ObsLayout, NetworkState
from .generation import Scenario, reachable_subnets
from .validation import ValidationError, check_array


class BatchEnv:
    """A fixed-size batch of environments sharing one parameter shape.

    Scenarios may differ per slot (seeds, densities) but must share the
    structural counts (hosts, subnets, OS/service/process vocabulary) so all
    arrays keep static shapes. ``step`` returns views into internal buffers
    that stay valid until the next call.
    """

    def __init__(self, params: GenerationParams, config: EnvConfig, batch_size: int):
        params.validate()
        config.validate()
        self.params = params
        self.config = config
        self.spec = ActionSpaceSpec.from_params(params)
        self.layout = ObsLayout.from_scenario_dims(params)

        b = int(batch_size)
        if b < 1:
            raise ValidationError("batch_size must be >= 1")
        self.batch_size = b
        h = params.n_hosts_total
        ns = params.n_subnets
        self._h = h
        self._ns = ns
        self._ah = self.spec.per_host_actions
        self._na = self.spec.total_actions
        self._f = self.layout.f_obs
        self._recent_dim = self.layout.recent_dim
        self._d = self.layout.agent_input_dim
        self.scenarios: list[Scenario | None] = [None] * b
        self.steps_taken = 0

        # Static per-slot configuration (rewritten on slot reset).
        self.topology = np.zeros((b, ns, ns), dtype=np.uint8)
        self.firewall = np.zeros((b, ns, ns, params.n_services), dtype=np.uint8)
        self.host_subnet = np.zeros((b, h), dtype=np.int16)
        self.sensitive = np.zeros((b, h), dtype=np.uint8)
        self.static_valid = np.zeros((b, h, self._ah), dtype=np.uint8)
        self.static_valid_count = np.zeros((b, h), dtype=np.int64)
        self.reveal_sets = np.zeros((b, ns, h), dtype=np.uint8)
        self.target_hosts = np.zeros((b, h), dtype=np.uint8)
        self.reset_reachable = np.zeros((b, h), dtype=np.uint8)
        # transposed (feature-major) float copies used for observation writes
        self.subnet_onehot_f = np.zeros((b, ns, h), dtype=np.float32)
        self.os_onehot_f = np.zeros((b, params.n_os, h), dtype=np.float32)
        self.services_f = np.zeros((b, params.n_services, h), dtype=np.float32)
        self.processes_f = np.zeros((b, params.n_processes, h), dtype=np.float32)
        self.sensitive_f = np.zeros((b, h), dtype=np.float32)
        self.scale_denom = np.zeros(b, dtype=np.float64)  # N_s * V_h per slot

        # Dynamic episode state. Arrays with a scatter target carry one spare
        # dump row/column (index h or ns).
        self.reachable = np.zeros((b, h), dtype=np.uint8)
        self.discovered = np.zeros((b, h), dtype=np.uint8)
        self._access_pad = np.zeros((b, h + 1), dtype=np.uint8)
        self.access = self._access_pad[:, :h]
        self._rooted_pad = np.zeros((b, h + 1), dtype=np.uint8)
        self.rooted = self._rooted_pad[:, :h]
        self._compromised_pad = np.zeros((b, ns + 1), dtype=np.uint8)
        self.compromised = self._compromised_pad[:, :ns]
        self.step_count = np.zeros(b, dtype=np.int64)
        self.done = np.zeros(b, dtype=bool)
        self.success = np.zeros(b, dtype=bool)

        # Outputs. Agent-input storage carries one spare dump row (index b)
        # that absorbs scatter writes for deselected slots.
        self._ai_storage = np.zeros((b + 1, self._d), dtype=np.float32)
        self.agent_input = self._ai_storage[:b]
        self.mask = np.zeros((b, h, self._ah), dtype=np.uint8)
        self.mask_flat = self.mask.reshape(b, self._na)
        self.host_mask = np.zeros((b, h), dtype=np.uint8)
        self.reward_unscaled = np.zeros(b, dtype=np.float64)
        self.reward_scaled = np.zeros(b, dtype=np.float64)
        self.outcome = np.zeros(b, dtype=np.uint8)
        self.n_dh = np.zeros(b, dtype=np.int64)

        # Flat views used by gathers/scatters (fixed objects, never realloc'd).
        self._access_flat = self._access_pad.reshape(-1)
        self._rooted_flat = self._rooted_pad.reshape(-1)
        self._compromised_flat = self._compromised_pad.reshape(-1)
        self._reachable_flat = self.reachable.reshape(-1)
        self._discovered_flat = self.discovered.reshape(-1)
        self._subnet_flat = self.host_subnet.reshape(-1)
        self._sensitive_flat = self.sensitive.reshape(-1)
        self._static_valid_flat = self.static_valid.reshape(-1)
        self._firewall_flat = self.firewall.reshape(-1)
        self._reveal_2d = self.reveal_sets.reshape(b * ns, h)
        self._ai_flat = self._ai_storage.reshape(-1)
        self._ai_recent = self.agent_input[:, : self._recent_dim]
        self._recent3d = self._ai_recent.reshape(b, self._f, h)
        self._ai_aux = self.agent_input[:, self._recent_dim : self._recent_dim + AUX_DIM]
        self._ai_hist = self.agent_input[:, self._recent_dim + AUX_DIM :]
        self._dump_ai = b * self._d  # flat index of the dump row

        # Decode tables, one entry per within-host offset.
        tables = offset_tables(self.spec)
        self._tab_kind = tables["kind"].astype(np.int64)
        self._tab_payload = tables["payload"].astype(np.int64)
        costs = np.empty(N_ACTION_TYPES + 2, dtype=np.float64)
        costs[:4] = config.scan_cost
        costs[4] = config.exploit_cost
        costs[5] = config.privesc_cost
        self._tab_cost = costs

        if not np.shares_memory(self._recent3d, self._ai_storage):
            raise AssertionError("recent view must alias agent-input storage")

        self._arange_b = np.arange(b, dtype=np.int64)
        self._base_bh = self._arange_b * h  # row starts in (b, h) flats
        self._base_bhp = self._arange_b * (h + 1)
        self._base_bnsp = self._arange_b * (ns + 1)
        self._base_brow = self._arange_b * ns
        self._base_fw = self._arange_b * (ns * ns * params.n_services)
        self._fw_stride_i = np.arange(ns, dtype=np.int64) * (ns * params.n_services)
        self._base_ai = self._arange_b * self._d
        self._ONE_F32 = np.ones(1, dtype=np.float32)
        self._ONE_U8 = np.ones(1, dtype=np.uint8)
        self._TWO_U8 = np.full(1, ACCESS_ROOT, dtype=np.uint8)

        w = {}
        for name in ("t", "w", "kind", "payload", "idx", "idx2", "teff", "ceff"):
            w[name] = np.zeros(b, dtype=np.int64)
        for name in ("active", "prop_scan", "subnet_scan", "exploit", "privesc", "succ",
                     "succ_prop", "succ_subnet", "succ_exploit", "succ_priv", "sel",
                     "conn", "perm", "bonus", "reach_t", "disc_t", "valid_t", "sens_t",
                     "rooted_t", "user_t", "src_ok"):
            w[name] = np.zeros(b, dtype=bool)
        w["access_t"] = np.zeros(b, dtype=np.uint8)
        w["gathered_u8"] = np.zeros(b, dtype=np.uint8)
        w["subnet_t"] = np.zeros(b, dtype=np.int16)
        w["subnet_t64"] = np.zeros(b, dtype=np.int64)
        w["fw_idx"] = np.zeros((b, ns), dtype=np.int64)
        w["fw_cols"] = np.zeros((b, ns), dtype=np.uint8)
        w["src_sum"] = np.zeros(b, dtype=np.int64)
        w["prod_bn"] = np.zeros((b, ns), dtype=np.uint8)
        w["reveal"] = np.zeros((b, h), dtype=np.uint8)
        w["newly"] = np.zeros((b, h), dtype=bool)
        w["touched"] = np.zeros((b, h + 1), dtype=np.uint8)
        w["touchedf"] = np.zeros((b, h), dtype=np.float32)
        w["os_touch"] = np.zeros((b, h + 1), dtype=np.uint8)
        w["svc_touch"] = np.zeros((b, h + 1), dtype=np.uint8)
        w["proc_touch"] = np.zeros((b, h + 1), dtype=np.uint8)
        w["sens_touch"] = np.zeros((b, h + 1), dtype=np.uint8)
        w["blockf"] = np.zeros((b, h), dtype=np.float32)
        w["flagsf"] = np.zeros((b, h), dtype=np.float32)
        w["ge_bh"] = np.zeros((b, h), dtype=bool)
        w["cost"] = np.zeros(b, dtype=np.float64)
        w["f64"] = np.zeros(b, dtype=np.float64)
        w["noop"] = np.zeros(b, dtype=bool)
        w["outcome_eff"] = np.zeros(b, dtype=np.int64)
        # valid-action sampler workspace
        w["cnt_h"] = np.zeros((b, h), dtype=np.int64)
        w["cum_h"] = np.zeros((b, h), dtype=np.int64)
        w["gt_h"] = np.zeros((b, h), dtype=bool)
        w["u"] = np.zeros(b, dtype=np.float64)
        w["rank"] = np.zeros(b, dtype=np.int64)
        w["host_pick"] = np.zeros(b, dtype=np.int64)
        w["row"] = np.zeros((b, self._ah), dtype=np.uint8)
        w["cum_a"] = np.zeros((b, self._ah), dtype=np.int64)
        w["gt_a"] = np.zeros((b, self._ah), dtype=bool)
        self._w = w
        self._mask_2d = self.mask.reshape(b * h, self._ah)
        self._touched_flat = w["touched"].reshape(-1)
        self._os_touch_flat = w["os_touch"].reshape(-1)
        self._svc_touch_flat = w["svc_touch"].reshape(-1)
        self._proc_touch_flat = w["proc_touch"].reshape(-1)
        self._sens_touch_flat = w["sens_touch"].reshape(-1)

    # ----- slot management -------------------------------------------------

    def reset_slot(self, i: int, scenario: Scenario) -> None:
        """Install a scenario in slot ``i`` and reset its episode state."""
        p = scenario.params
        if (p.n_hosts, p.n_subnets, p.n_os, p.n_services, p.n_processes) != (
            self.params.n_hosts, self.params.n_subnets, self.params.n_os,
            self.params.n_services, self.params.n_processes,
        ):
            raise ValidationError("scenario shape does not match batch parameters")
        self.scenarios[i] = scenario
        h, ns = self._h, self._ns

        self.topology[i] = scenario.topology
        self.firewall[i] = scenario.firewall
        self.host_subnet[i] = scenario.host_subnet
        self.sensitive[i] = scenario.host_sensitive
        self.static_valid[i] = static_action_validity(self.spec, scenario)
        self.static_valid_count[i] = self.static_valid[i].sum(axis=1)
        self.sensitive_f[i] = scenario.host_sensitive
        self.os_onehot_f[i] = scenario.host_os.T
        self.services_f[i] = scenario.host_services.T
        self.processes_f[i] = scenario.host_processes.T
        onehot = np.zeros((ns, h), dtype=np.float32)
        onehot[scenario.host_subnet, np.arange(h)] = 1.0
        self.subnet_onehot_f[i] = onehot
        # reveal_sets[j]: hosts seen by a subnet scan executed in subnet j
        same = scenario.host_subnet[None, :] == np.arange(ns)[:, None]
        linked = scenario.topology[:, scenario.host_subnet] > 0
        self.reveal_sets[i] = (same | linked).astype(np.uint8)
        active = reachable_subnets(scenario.topology)
        self.target_hosts[i] = scenario.host_sensitive & active[scenario.host_subnet]
        reach0 = (scenario.host_subnet == SUBNET_DMZ).astype(np.uint8)
        reach0[scenario.attacker_host] = 1
        self.reset_reachable[i] = reach0
        self.scale_denom[i] = ns * self.config.host_value

        self.reachable[i] = reach0
        self.discovered[i] = 0
        self.discovered[i, scenario.attacker_host] = 1
        self.access[i] = 0
        self.access[i, scenario.attacker_host] = ACCESS_ROOT
        self.rooted[i] = 0
        self.compromised[i] = 0
        self.compromised[i, SUBNET_INTERNET] = 1
        self.step_count[i] = 0
        self.done[i] = False
        self.success[i] = False
        self.agent_input[i] = 0.0
        np.logical_or(self.discovered[i], self.reachable[i], out=self.host_mask[i])
        np.multiply(self.static_valid[i], self.host_mask[i][:, None], out=self.mask[i])

    def reset_all(self, scenarios: list[Scenario]) -> None:
        if len(scenarios) != self.batch_size:
            raise ValidationError("need one scenario per slot")
        for i, s in enumerate(scenarios):
            self.reset_slot(i, s)

    def state_of_slot(self, i: int) -> NetworkState:
        """Copy of slot ``i``'s episode state in the scalar representation."""
        return NetworkState(
            reachable=self.reachable[i].copy(),
            discovered=self.discovered[i].copy(),
            access=self.access[i].copy(),
            rooted_sensitive=self.rooted[i].copy(),
            compromised_subnets=self.compromised[i].copy(),
            target_hosts=self.target_hosts[i].copy(),
            history=self._ai_hist[i].copy(),
            step=int(self.step_count[i]),
            done=bool(self.done[i]),
        )

    # ----- stepping ---------------------------------------------------------

    def step(self, actions: np.ndarray):
        """Advance every slot by one action.

        Returns views ``(agent_input, reward, done, mask_flat)``. Slots that
        were already done are no-ops: zero agent input, zero reward, done
        stays set.
        """
        check_array(actions, "actions", shape=(self.batch_size,), dtype=np.int64)
        if actions.min() < 0 or actions.max() >= self._na:
            raise ValidationError("action index out of range")
        w = self._w
        h, ns = self._h, self._ns

        np.logical_not(self.done, out=w["active"])
        np.copyto(w["noop"], self.done)

        # Decode: target host, within-host offset, kind, payload.
        np.floor_divide(actions, self._ah, out=w["t"])
        np.remainder(actions, self._ah, out=w["w"])
        np.take(self._tab_kind, w["w"], out=w["kind"])
        np.take(self._tab_payload, w["w"], out=w["payload"])

        # Pre-state gathers at the target host.
        np.add(self._base_bh, w["t"], out=w["idx"])
        np.take(self._reachable_flat, w["idx"], out=w["gathered_u8"])
        np.greater(w["gathered_u8"], 0, out=w["reach_t"])
        np.take(self._discovered_flat, w["idx"], out=w["gathered_u8"])
        np.greater(w["gathered_u8"], 0, out=w["disc_t"])
        np.take(self._access_flat, np.add(self._base_bhp, w["t"], out=w["idx2"]), out=w["access_t"])
        np.greater_equal(w["access_t"], ACCESS_USER, out=w["user_t"])
        np.take(self._sensitive_flat, w["idx"], out=w["gathered_u8"])
        np.greater(w["gathered_u8"], 0, out=w["sens_t"])
        np.take(self._rooted_flat, w["idx2"], out=w["gathered_u8"])
        np.greater(w["gathered_u8"], 0, out=w["rooted_t"])
        np.take(self._subnet_flat, w["idx"], out=w["subnet_t"])
        np.copyto(w["subnet_t64"], w["subnet_t"], casting="same_kind")

        # Static validity of (host, offset): config match for exploit/privesc.
        np.multiply(w["idx"], self._ah, out=w["idx2"])
        np.add(w["idx2"], w["w"], out=w["idx2"])
        np.take(self._static_valid_flat, w["idx2"], out=w["gathered_u8"])
        np.greater(w["gathered_u8"], 0, out=w["valid_t"])

        # Exploit routing: some compromised subnet must pass the firewall for
        # this service into the target subnet.
        np.multiply(w["subnet_t64"], self.params.n_services, out=w["idx2"])
        np.add(w["idx2"], w["payload"], out=w["idx2"])  # payload is -1 for scans: harmless
        np.add(w["idx2"], self._base_fw, out=w["idx2"])
        np.add(w["idx2"][:, None], self._fw_stride_i[None, :], out=w["fw_idx"])
        np.take(self._firewall_flat, w["fw_idx"], out=w["fw_cols"])
        np.multiply(w["fw_cols"], self.compromised, out=w["prod_bn"])
        np.sum(w["prod_bn"], axis=1, out=w["src_sum"], dtype=np.int64)
        np.greater(w["src_sum"], 0, out=w["src_ok"])

        # Kind predicates (gated on live slots).
        np.less_equal(w["kind"], 2, out=w["prop_scan"])
        np.logical_and(w["prop_scan"], w["active"], out=w["prop_scan"])
        np.equal(w["kind"], 3, out=w["subnet_scan"])
        np.logical_and(w["subnet_scan"], w["active"], out=w["subnet_scan"])
        np.equal(w["kind"], 4, out=w["exploit"])
        np.logical_and(w["exploit"], w["active"], out=w["exploit"])
        np.equal(w["kind"], 5, out=w["privesc"])
        np.logical_and(w["privesc"], w["active"], out=w["privesc"])

        np.logical_and(w["prop_scan"], w["reach_t"], out=w["succ_prop"])
        np.logical_and(w["succ_prop"], w["disc_t"], out=w["succ_prop"])
        np.logical_and(w["subnet_scan"], w["user_t"], out=w["succ_subnet"])
        np.logical_and(w["exploit"], w["reach_t"], out=w["succ_exploit"])
        np.logical_and(w["succ_exploit"], w["disc_t"], out=w["succ_exploit"])
        np.logical_and(w["succ_exploit"], w["valid_t"], out=w["succ_exploit"])
        np.logical_and(w["succ_exploit"], w["src_ok"], out=w["succ_exploit"])
        np.logical_and(w["privesc"], w["user_t"], out=w["succ_priv"])
        np.logical_and(w["succ_priv"], w["valid_t"], out=w["succ_priv"])

        np.logical_or(w["succ_prop"], w["succ_subnet"], out=w["succ"])
        np.logical_or(w["succ"], w["succ_exploit"], out=w["succ"])
        np.logical_or(w["succ"], w["succ_priv"], out=w["succ"])

        # Outcome code: success=0, connection=1, permission=2, undefined=3.
        np.logical_not(w["reach_t"], out=w["conn"])
        np.logical_and(w["conn"], w["active"], out=w["conn"])
        np.logical_or(w["subnet_scan"], w["privesc"], out=w["perm"])
        np.logical_and(w["perm"], w["reach_t"], out=w["perm"])
        np.logical_and(w["perm"], np.logical_not(w["user_t"], out=w["sel"]), out=w["perm"])
        self.outcome.fill(3)
        np.copyto(self.outcome, 2, where=w["perm"], casting="unsafe")
        np.copyto(self.outcome, 1, where=w["conn"], casting="unsafe")
        np.copyto(self.outcome, 0, where=w["succ"], casting="unsafe")

        # Subnet-scan reveals (masked to scanning slots before use).
        np.add(self._base_brow, w["subnet_t64"], out=w["idx2"])
        np.take(self._reveal_2d, w["idx2"], axis=0, out=w["reveal"])
        np.multiply(w["reveal"], w["succ_subnet"][:, None], out=w["reveal"])
        np.less(self.discovered, w["reveal"], out=w["newly"])
        np.sum(w["newly"], axis=1, out=self.n_dh, dtype=np.int64)
        np.bitwise_or(self.discovered, w["reveal"], out=self.discovered)
        np.bitwise_or(self.reachable, w["reveal"], out=self.reachable)

        # Exploit/privesc state writes through dump-row scatters.
        self._scatter_max_access(w["succ_exploit"], w["t"], ACCESS_USER)
        self._scatter_set(self._access_flat, self._base_bhp, w["succ_priv"], w["t"], h, self._TWO_U8)
        np.logical_and(w["succ_priv"], w["sens_t"], out=w["sel"])
        self._scatter_set(self._rooted_flat, self._base_bhp, w["sel"], w["t"], h, self._ONE_U8)
        np.logical_and(w["sel"], np.logical_not(w["rooted_t"], out=w["bonus"]), out=w["bonus"])
        np.logical_or(w["succ_exploit"], w["succ_priv"], out=w["sel"])
        self._scatter_set(self._compromised_flat, self._base_bnsp, w["sel"], w["subnet_t64"], ns, self._ONE_U8)

        # Rewards.
        np.take(self._tab_cost, w["kind"], out=w["cost"])
        np.negative(w["cost"], out=self.reward_unscaled)
        np.multiply(self.n_dh, self.config.discovery_value, out=w["f64"])
        np.add(self.reward_unscaled, w["f64"], out=self.reward_unscaled)
        np.multiply(w["bonus"], self.config.host_value, out=w["f64"])
        np.add(self.reward_unscaled, w["f64"], out=self.reward_unscaled)
        np.multiply(self.reward_unscaled, w["active"], out=self.reward_unscaled)
        np.add(self.reward_unscaled, 0.0, out=self.reward_unscaled)  # -0.0 -> +0.0 on no-ops
        np.divide(self.reward_unscaled, self.scale_denom, out=self.reward_scaled)

        # Step counters and termination.
        np.add(self.step_count, w["active"], out=self.step_count, casting="unsafe")
        np.greater_equal(self.rooted, self.target_hosts, out=w["ge_bh"])
        np.logical_and.reduce(w["ge_bh"], axis=1, out=self.success)
        np.copyto(self.done, True, where=self.success)
        np.greater_equal(self.step_count, self.config.max_steps, out=w["sel"])
        np.copyto(self.done, True, where=w["sel"])

        self._build_observation()

        # Validity mask for the post-step state.
        np.logical_or(self.discovered, self.reachable, out=w["ge_bh"])
        np.copyto(self.host_mask, w["ge_bh"], casting="same_kind")
        np.multiply(self.static_valid, self.host_mask[:, :, None], out=self.mask)

        self.steps_taken += 1
        reward = self.reward_scaled if self.config.reward_scaling else self.reward_unscaled
        return self.agent_input, reward, self.done, self.mask_flat

    def _scatter_set(self, flat, base, sel, col, dump_col, value) -> None:
        """flat[base + (sel ? col : dump)] = value (dump row absorbs the rest)."""
        w = self._w
        w["teff"].fill(dump_col)
        np.copyto(w["teff"], col, where=sel)
        np.add(base, w["teff"], out=w["teff"])
        np.put(flat, w["teff"], value)

    def _scatter_max_access(self, sel, col, level: int) -> None:
        w = self._w
        w["teff"].fill(self._h)
        np.copyto(w["teff"], col, where=sel)
        np.add(self._base_bhp, w["teff"], out=w["teff"])
        np.take(self._access_flat, w["teff"], out=w["access_t"])
        np.maximum(w["access_t"], level, out=w["access_t"])
        np.put(self._access_flat, w["teff"], w["access_t"])

    def _ai_bit_scatter(self, sel, col_base: int, payload) -> None:
        """Set the feature-major recent bit (col_base + payload, host t) to 1
        where selected; everything else lands in the storage dump row."""
        w = self._w
        np.add(w["payload"], col_base, out=w["teff"])
        np.multiply(w["teff"], self._h, out=w["teff"])
        np.add(w["teff"], w["t"], out=w["teff"])
        np.add(w["teff"], self._base_ai, out=w["teff"])
        w["idx2"].fill(self._dump_ai)
        np.copyto(w["idx2"], w["teff"], where=sel)
        np.put(self._ai_flat, w["idx2"], self._ONE_F32)

    def _build_observation(self) -> None:
        """Write the [recent | aux | history] agent input from the post-step
        state. Every recent column region is fully rewritten each step (block
        writes zero the untouched rows), so no clearing pass is needed."""
        w = self._w
        h, f = self._h, self._f
        lay = self.layout
        rec = self._recent3d

        # Rows touched by the action: full reveal set for subnet scans, the
        # single target row for every other success.
        np.copyto(w["touched"][:, :h], w["reveal"])
        w["touched"][:, h] = 0
        np.logical_and(w["succ"], np.logical_not(w["subnet_scan"], out=w["sel"]), out=w["sel"])
        self._scatter_set(self._touched_flat, self._base_bhp, w["sel"], w["t"], h, self._ONE_U8)
        np.copyto(w["touchedf"], w["touched"][:, :h], casting="same_kind")

        np.copyto(rec[:, lay.col_addr, :], w["touchedf"], casting="same_kind")
        np.multiply(self.subnet_onehot_f, w["touchedf"][:, None, :],
                    out=rec[:, lay.col_subnet : lay.col_subnet + self._ns, :])
        np.copyto(w["flagsf"], self.reachable, casting="same_kind")
        np.multiply(w["flagsf"], w["touchedf"], out=rec[:, lay.col_reachable, :])
        np.copyto(w["flagsf"], self.discovered, casting="same_kind")
        np.multiply(w["flagsf"], w["touchedf"], out=rec[:, lay.col_discovered, :])

        # OS block: os scans, exploits and privescs reveal the full one-hot.
        np.logical_or(w["succ_exploit"], w["succ_priv"], out=w["sel"])
        np.logical_and(w["succ_prop"], np.equal(w["kind"], 0, out=w["bonus"]), out=w["bonus"])
        np.logical_or(w["sel"], w["bonus"], out=w["sel"])
        w["os_touch"].fill(0)
        self._scatter_set(self._os_touch_flat, self._base_bhp, w["sel"], w["t"], h, self._ONE_U8)
        np.copyto(w["touchedf"], w["os_touch"][:, :h], casting="same_kind")
        np.multiply(self.os_onehot_f, w["touchedf"][:, None, :],
                    out=rec[:, lay.col_os : lay.col_os + self.params.n_os, :])

        # Service block: full row for service scans, then the single exploited bit.
        np.logical_and(w["succ_prop"], np.equal(w["kind"], 1, out=w["bonus"]), out=w["bonus"])
        w["svc_touch"].fill(0)
        self._scatter_set(self._svc_touch_flat, self._base_bhp, w["bonus"], w["t"], h, self._ONE_U8)
        np.copyto(w["touchedf"], w["svc_touch"][:, :h], casting="same_kind")
        np.multiply(self.services_f, w["touchedf"][:, None, :],
                    out=rec[:, lay.col_services : lay.col_services + self.params.n_services, :])
        self._ai_bit_scatter(w["succ_exploit"], lay.col_services, w["payload"])

        # Process block: full row for process scans, single bit for privescs.
        np.logical_and(w["succ_prop"], np.equal(w["kind"], 2, out=w["bonus"]), out=w["bonus"])
        w["proc_touch"].fill(0)
        self._scatter_set(self._proc_touch_flat, self._base_bhp, w["bonus"], w["t"], h, self._ONE_U8)
        np.copyto(w["touchedf"], w["proc_touch"][:, :h], casting="same_kind")
        np.multiply(self.processes_f, w["touchedf"][:, None, :],
                    out=rec[:, lay.col_processes : lay.col_processes + self.params.n_processes, :])
        self._ai_bit_scatter(w["succ_priv"], lay.col_processes, w["payload"])

        # Sensitivity and access flags revealed by exploitation actions.
        np.logical_or(w["succ_exploit"], w["succ_priv"], out=w["sel"])
        w["sens_touch"].fill(0)
        self._scatter_set(self._sens_touch_flat, self._base_bhp, w["sel"], w["t"], h, self._ONE_U8)
        np.copyto(w["touchedf"], w["sens_touch"][:, :h], casting="same_kind")
        np.multiply(self.sensitive_f, w["touchedf"], out=rec[:, lay.col_sensitive, :])
        np.greater_equal(self.access, ACCESS_USER, out=w["ge_bh"])
        np.copyto(w["flagsf"], w["ge_bh"], casting="same_kind")
        np.multiply(w["flagsf"], w["touchedf"], out=rec[:, lay.col_access_user, :])
        np.greater_equal(self.access, ACCESS_ROOT, out=w["ge_bh"])
        np.copyto(w["flagsf"], w["ge_bh"], casting="same_kind")
        np.multiply(w["flagsf"], w["touchedf"], out=rec[:, lay.col_access_root, :])

        # Aux vector: action-type one-hot plus outcome one-hot, live slots only.
        self._ai_aux.fill(0.0)
        w["teff"].fill(self._dump_ai)
        np.add(self._base_ai, self._recent_dim, out=w["idx2"])
        np.add(w["idx2"], w["kind"], out=w["idx2"])
        np.copyto(w["teff"], w["idx2"], where=w["active"])
        np.put(self._ai_flat, w["teff"], self._ONE_F32)
        w["teff"].fill(self._dump_ai)
        np.copyto(w["outcome_eff"], self.outcome, casting="unsafe")
        np.add(self._base_ai, self._recent_dim + N_ACTION_TYPES, out=w["idx2"])
        np.add(w["idx2"], w["outcome_eff"], out=w["idx2"])
        np.copyto(w["teff"], w["idx2"], where=w["active"])
        np.put(self._ai_flat, w["teff"], self._ONE_F32)

        # History is the running element-wise max of recents.
        np.maximum(self._ai_hist, self._ai_recent, out=self._ai_hist)
        if w["noop"].any():
            np.copyto(self._ai_recent, 0.0, where=w["noop"][:, None])
            np.copyto(self._ai_hist, 0.0, where=w["noop"][:, None])

    def sample_valid_actions(self, rng: np.random.Generator, out: np.ndarray) -> np.ndarray:
        """Draw one uniformly random unmasked action per slot, without
        allocating: the flat-uniform draw factors into a count-weighted host
        pick followed by a uniform pick inside the host's valid row."""
        w = self._w
        np.multiply(self.host_mask, self.static_valid_count, out=w["cnt_h"])
        np.cumsum(w["cnt_h"], axis=1, out=w["cum_h"])
        total = w["cum_h"][:, -1]
        if total.min() <= 0:
            raise ValidationError("a slot has an empty action mask")
        rng.random(out=w["u"])
        np.multiply(w["u"], total, out=w["u"])
        np.floor(w["u"], out=w["u"])
        np.copyto(w["rank"], w["u"], casting="unsafe")
        np.minimum(w["rank"], np.subtract(total, 1, out=w["teff"]), out=w["rank"])

        np.greater(w["cum_h"], w["rank"][:, None], out=w["gt_h"])
        np.argmax(w["gt_h"], axis=1, out=w["host_pick"])
        # within-host rank = rank - (valid actions before the chosen host)
        np.add(self._base_bh, w["host_pick"], out=w["idx"])
        np.take(w["cum_h"].reshape(-1), w["idx"], out=w["teff"])
        np.subtract(w["rank"], w["teff"], out=w["rank"])
        np.take(w["cnt_h"].reshape(-1), w["idx"], out=w["teff"])
        np.add(w["rank"], w["teff"], out=w["rank"])

        np.take(self._mask_2d, w["idx"], axis=0, out=w["row"])
        np.cumsum(w["row"], axis=1, dtype=np.int64, out=w["cum_a"])
        np.greater(w["cum_a"], w["rank"][:, None], out=w["gt_a"])
        np.argmax(w["gt_a"], axis=1, out=w["teff"])
        np.multiply(w["host_pick"], self._ah, out=out)
        np.add(out, w["teff"], out=out)
        return out
