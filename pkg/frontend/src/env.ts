/**
 * Typed environment handle over the bridge: batched reset/step with validity
 * masks, plus scenario generation and native-rollout retrieval for
 * equivalence checks.
 */

import { BridgeClient, BridgeOptions } from "./client.js";
import {
  DecodedArray,
  WireArray,
  decodeArray,
  encodeActions,
} from "./protocol.js";

export type LevelMode = "fixed" | "dr";

export interface EnvInfo {
  handle: number;
  obsDim: number;
  nActions: number;
  nHosts: number;
  maxSteps: number;
}

export interface StepResult {
  agentInput: DecodedArray<Float32Array>;
  reward: DecodedArray<Float64Array>;
  done: DecodedArray<Uint8Array>;
  mask: DecodedArray<Uint8Array>;
}

export interface Trajectory {
  actions: DecodedArray<BigInt64Array>;
  agentInputs: DecodedArray<Float32Array>;
  rewards: DecodedArray<Float64Array>;
  dones: DecodedArray<Uint8Array>;
  masks: DecodedArray<Uint8Array>;
}

export class PensimEnv {
  private constructor(
    private client: BridgeClient,
    private ownsClient: boolean,
    public readonly info: EnvInfo,
    public readonly batch: number,
  ) {}

  static async create(
    preset: string,
    batch: number,
    opts: { mode?: LevelMode; seed?: number; td?: number; client?: BridgeClient } & BridgeOptions = {},
  ): Promise<PensimEnv> {
    const ownsClient = !opts.client;
    const client = opts.client ?? new BridgeClient(opts);
    const reply = await client.call("make_env", {
      preset,
      batch,
      mode: opts.mode ?? "fixed",
      seed: opts.seed ?? 0,
      td: opts.td ?? null,
    });
    const info: EnvInfo = {
      handle: reply.env as number,
      obsDim: reply.obs_dim as number,
      nActions: reply.n_actions as number,
      nHosts: reply.n_hosts as number,
      maxSteps: reply.max_steps as number,
    };
    return new PensimEnv(client, ownsClient, info, batch);
  }

  static async actionCount(preset: string, opts: BridgeOptions & { client?: BridgeClient } = {}): Promise<number> {
    const ownsClient = !opts.client;
    const client = opts.client ?? new BridgeClient(opts);
    try {
      const reply = await client.call("action_count", { preset });
      return reply.count as number;
    } finally {
      if (ownsClient) client.close();
    }
  }

  async reset(seeds: number[]): Promise<{ agentInput: DecodedArray<Float32Array>; mask: DecodedArray<Uint8Array> }> {
    const reply = await this.client.call("reset", { env: this.info.handle, seeds });
    return {
      agentInput: decodeArray(reply.agent_input as WireArray) as DecodedArray<Float32Array>,
      mask: decodeArray(reply.mask as WireArray) as DecodedArray<Uint8Array>,
    };
  }

  async step(actions: bigint[] | BigInt64Array): Promise<StepResult> {
    const reply = await this.client.call("step", {
      env: this.info.handle,
      actions: encodeActions(actions),
    });
    return {
      agentInput: decodeArray(reply.agent_input as WireArray) as DecodedArray<Float32Array>,
      reward: decodeArray(reply.reward as WireArray) as DecodedArray<Float64Array>,
      done: decodeArray(reply.done as WireArray) as DecodedArray<Uint8Array>,
      mask: decodeArray(reply.mask as WireArray) as DecodedArray<Uint8Array>,
    };
  }

  /** Random-policy trajectory executed natively on the Python side in one
   * call; includes the sampled actions so callers can replay them. */
  async nativeRollout(nSteps: number, policySeed: number): Promise<Trajectory> {
    const reply = await this.client.call("rollout", {
      env: this.info.handle,
      n_steps: nSteps,
      policy_seed: policySeed,
    });
    return {
      actions: decodeArray(reply.actions as WireArray) as DecodedArray<BigInt64Array>,
      agentInputs: decodeArray(reply.agent_inputs as WireArray) as DecodedArray<Float32Array>,
      rewards: decodeArray(reply.rewards as WireArray) as DecodedArray<Float64Array>,
      dones: decodeArray(reply.dones as WireArray) as DecodedArray<Uint8Array>,
      masks: decodeArray(reply.masks as WireArray) as DecodedArray<Uint8Array>,
    };
  }

  async generateScenario(preset: string, seed: number): Promise<{ text: string; binaryBase64: string }> {
    const reply = await this.client.call("generate", { preset, seed });
    return { text: reply.text as string, binaryBase64: reply.binary as string };
  }

  async close(): Promise<void> {
    try {
      await this.client.call("close", { env: this.info.handle });
    } finally {
      if (this.ownsClient) this.client.close();
    }
  }
}
