export {
  EnvServerClient,
  JoinEnv,
  make,
  NativeError,
  TransportError,
} from "./env.js";
export type {
  EnvInfo,
  MakeOptions,
  Observation,
  ResetResult,
  SaturatingCount,
  StepResult,
} from "./env.js";
export { ServerProcess } from "./protocol.js";
export type { ServerProcessOptions } from "./protocol.js";
