/**
 * Gymnasium-shaped handles to native join-ordering environments.
 *
 * The native engine runs as a `joinsim env-server` subprocess; this module
 * only marshals requests and replies. All masking, reward math, and episode
 * state stay on the native side, so a handle's outputs are element-wise
 * identical to what the engine produces in-process.
 */

import path from "node:path";
import {
  NativeError,
  ServerProcess,
  TransportError,
  type ServerProcessOptions,
} from "./protocol.js";

/** Flat numeric observation of length n_tables + 2 * n_cols. */
export type Observation = number[];

/** A 128-bit cardinality counter: decimal string plus saturation flag. */
export interface SaturatingCount {
  value: string;
  saturated: boolean;
}

/**
 * Per-step info dictionary, crossing the boundary with its native keys.
 * `action_mask` is a multi-hot encoding of the currently legal actions.
 */
export interface EnvInfo {
  action_mask: number[];
  query_id?: string;
  step?: number;
  components?: number[];
  ir_cardinality?: SaturatingCount;
  [key: string]: unknown;
}

/** Result of `reset`: initial observation and info. */
export type ResetResult = [Observation, EnvInfo];

/**
 * Result of `step`: observation, reward, terminated, truncated, info.
 * The truncated flag is always false; episodes have a fixed horizon and
 * always run to termination.
 */
export type StepResult = [Observation, number, boolean, boolean, EnvInfo];

export interface MakeOptions {
  /** Workspace directory holding schema.csv, data/, queries.jsonl, traces/. */
  workspace?: string;
  /** Alternative to `workspace`: path to traces/manifest.txt inside one. */
  traceManifest?: string;
  /** "left_deep" (default) or "bushy". */
  planType?: "left_deep" | "bushy";
  /** Mask actions that would form cross products (with fallback). */
  disableCp?: boolean;
  /** Restrict sampling to these query ids; default is every traced query. */
  queryIds?: string[];
  /** Reward clipping factor (default 100). */
  clipFactor?: number;
  /** Seed for the env's query-sampling stream. */
  seed?: number;
}

interface MadeEnv {
  env: number;
  plan_type: string;
  n_tables: number;
  n_cols: number;
  obs_size: number;
  action_space_size: number;
  query_ids: string[];
}

/**
 * Handle to one native environment instance.
 *
 * A handle is single-threaded: await each `reset`/`step` before issuing the
 * next. Distinct handles (even on one server) are independent.
 */
export class JoinEnv {
  /** "left_deep" or "bushy". */
  readonly planType: string;
  /** Number of alias slots in the catalog. */
  readonly nTables: number;
  /** Number of global columns. */
  readonly nCols: number;
  /** Observation length, nTables + 2 * nCols. */
  readonly obsSize: number;
  /** Action space size: nTables placements, or nTables choose 2 pairs. */
  readonly actionSpaceSize: number;
  /** Query ids this env samples from. */
  readonly queryIds: readonly string[];

  private closed = false;

  private constructor(
    private readonly server: ServerProcess,
    private readonly ownsServer: boolean,
    private readonly handle: number,
    made: MadeEnv
  ) {
    this.planType = made.plan_type;
    this.nTables = made.n_tables;
    this.nCols = made.n_cols;
    this.obsSize = made.obs_size;
    this.actionSpaceSize = made.action_space_size;
    this.queryIds = made.query_ids;
  }

  /** @internal Used by {@link make} and {@link EnvServerClient.make}. */
  static async create(
    server: ServerProcess,
    ownsServer: boolean,
    options: MakeOptions
  ): Promise<JoinEnv> {
    const request: Record<string, unknown> = { op: "make" };
    const workspace = resolveWorkspace(options);
    if (workspace !== undefined) {
      request.workspace = workspace;
    }
    if (options.planType !== undefined) {
      request.plan_type = options.planType;
    }
    if (options.disableCp !== undefined) {
      request.disable_cp = options.disableCp;
    }
    if (options.queryIds !== undefined) {
      request.query_ids = options.queryIds;
    }
    if (options.clipFactor !== undefined) {
      request.clip_factor = options.clipFactor;
    }
    if (options.seed !== undefined) {
      request.seed = options.seed;
    }
    const made = (await server.request(request)) as unknown as MadeEnv;
    return new JoinEnv(server, ownsServer, made.env, made);
  }

  /**
   * Start a new episode.
   *
   * @param queryId - Query to load; omitted, the env samples one.
   * @param seed - Reseeds the env's sampling stream before drawing.
   */
  async reset(queryId?: string, seed?: number): Promise<ResetResult> {
    this.ensureOpen();
    const request: Record<string, unknown> = { op: "reset", env: this.handle };
    if (queryId !== undefined) {
      request.query_id = queryId;
    }
    if (seed !== undefined) {
      request.seed = seed;
    }
    const result = await this.server.request(request);
    return [result.observation as Observation, result.info as EnvInfo];
  }

  /**
   * Apply one action: a table placement (left-deep) or a pair index
   * (bushy). Masked actions raise the native invalid-action error.
   */
  async step(action: number): Promise<StepResult> {
    this.ensureOpen();
    const result = await this.server.request({
      op: "step",
      env: this.handle,
      action,
    });
    return [
      result.observation as Observation,
      result.reward as number,
      result.terminated as boolean,
      result.truncated as boolean,
      result.info as EnvInfo,
    ];
  }

  /**
   * Release the native instance. An env made via the standalone
   * {@link make} factory also shuts its private server down.
   */
  async close(): Promise<void> {
    if (this.closed) {
      return;
    }
    this.closed = true;
    try {
      await this.server.request({ op: "close", env: this.handle });
    } finally {
      if (this.ownsServer) {
        await this.server.shutdown();
      }
    }
  }

  private ensureOpen(): void {
    if (this.closed) {
      throw new TransportError("env handle is closed");
    }
  }
}

/**
 * Client owning one server subprocess on which many envs can be made.
 *
 * ```typescript
 * const server = new EnvServerClient();
 * const env = await server.make({ workspace: "ws", planType: "bushy" });
 * const [obs, info] = await env.reset("q2_0");
 * const [next, reward, done, , stepInfo] = await env.step(3);
 * await env.close();
 * await server.shutdown();
 * ```
 */
export class EnvServerClient {
  private readonly server: ServerProcess;

  constructor(options: ServerProcessOptions = {}) {
    this.server = new ServerProcess(options);
  }

  /** Construct a native env on this server. */
  make(options: MakeOptions): Promise<JoinEnv> {
    return JoinEnv.create(this.server, false, options);
  }

  /** Stop the server; outstanding handles become unusable. */
  shutdown(): Promise<void> {
    return this.server.shutdown();
  }

  /** Hard kill for cleanup paths. */
  kill(): void {
    this.server.kill();
  }
}

/**
 * One-call factory: spawn a dedicated server, make one env on it. The
 * returned env's `close()` also stops the server.
 */
export async function make(
  options: MakeOptions & ServerProcessOptions
): Promise<JoinEnv> {
  const server = new ServerProcess({
    command: options.command,
    cwd: options.cwd,
  });
  try {
    return await JoinEnv.create(server, true, options);
  } catch (err) {
    server.kill();
    throw err;
  }
}

function resolveWorkspace(options: MakeOptions): string | undefined {
  if (options.workspace !== undefined && options.traceManifest !== undefined) {
    throw new TypeError("pass either workspace or traceManifest, not both");
  }
  if (options.workspace !== undefined) {
    return path.resolve(options.workspace);
  }
  if (options.traceManifest !== undefined) {
    // manifest lives at <workspace>/traces/manifest.txt
    return path.dirname(path.dirname(path.resolve(options.traceManifest)));
  }
  return undefined;
}

export { NativeError, TransportError };
