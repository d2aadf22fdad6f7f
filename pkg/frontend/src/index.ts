export { BridgeClient, type BridgeOptions } from "./client.js";
export {
  PensimEnv,
  type EnvInfo,
  type LevelMode,
  type StepResult,
  type Trajectory,
} from "./env.js";
export {
  decodeArray,
  encodeArray,
  encodeActions,
  rows,
  type DecodedArray,
  type Dtype,
  type NumericArray,
  type WireArray,
} from "./protocol.js";
