/**
 * Line-delimited JSON transport to a native `joinsim env-server` process.
 *
 * One request per line, one response per line. Requests carry a
 * monotonically increasing `id`; responses are matched back to the pending
 * promise by that id, so the wire order does not matter. Floats cross as
 * JSON numbers, 128-bit counters as decimal strings inside
 * `{value, saturated}` objects.
 */

import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import { createInterface, type Interface } from "node:readline";

/** An error reported by the native side, with its native exception name. */
export class NativeError extends Error {
  constructor(
    public readonly nativeType: string,
    message: string
  ) {
    super(message);
    this.name = "NativeError";
  }
}

/** A failure of the transport itself (process died, unparseable reply). */
export class TransportError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "TransportError";
  }
}

interface Pending {
  resolve: (result: Record<string, unknown>) => void;
  reject: (err: Error) => void;
}

export interface ServerProcessOptions {
  /** Executable and arguments; defaults to `joinsim env-server`. */
  command?: string[];
  /** Working directory for the spawned server. */
  cwd?: string;
}

const DEFAULT_COMMAND = ["joinsim", "env-server"];

/**
 * Owns one server subprocess and multiplexes requests over its stdio.
 *
 * All protocol ops go through {@link request}. The caller is responsible
 * for sequencing: requests against one env handle must not be interleaved
 * (the native env is single-threaded per handle), but requests against
 * distinct handles may be in flight at once.
 */
export class ServerProcess {
  private child: ChildProcessWithoutNullStreams;
  private lines: Interface;
  private pending = new Map<number, Pending>();
  private nextId = 1;
  private exited = false;
  private stderrTail = "";

  constructor(options: ServerProcessOptions = {}) {
    const command = options.command ?? DEFAULT_COMMAND;
    const [exe, ...args] = command;
    if (!exe) {
      throw new TransportError("empty server command");
    }
    this.child = spawn(exe, args, {
      cwd: options.cwd,
      stdio: ["pipe", "pipe", "pipe"],
    });
    this.child.stderr.setEncoding("utf-8");
    this.child.stderr.on("data", (chunk: string) => {
      // keep the last few KB for diagnostics when the process dies
      this.stderrTail = (this.stderrTail + chunk).slice(-4096);
    });
    this.child.on("error", (err) => {
      this.failAll(new TransportError(`server failed to start: ${err.message}`));
    });
    this.child.on("exit", (code, signal) => {
      this.exited = true;
      const why = signal ? `signal ${signal}` : `code ${code}`;
      let message = `server exited with ${why} while requests were pending`;
      if (this.stderrTail.trim()) {
        message += `\nserver stderr:\n${this.stderrTail.trim()}`;
      }
      this.failAll(new TransportError(message));
    });
    this.lines = createInterface({ input: this.child.stdout });
    this.lines.on("line", (line) => this.onLine(line));
  }

  get alive(): boolean {
    return !this.exited;
  }

  request(payload: Record<string, unknown>): Promise<Record<string, unknown>> {
    if (this.exited) {
      return Promise.reject(new TransportError("server process has exited"));
    }
    const id = this.nextId++;
    const promise = new Promise<Record<string, unknown>>((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
    });
    this.child.stdin.write(JSON.stringify({ id, ...payload }) + "\n");
    return promise;
  }

  /** Ask the server to stop, then wait for the process to exit. */
  async shutdown(): Promise<void> {
    if (this.exited) {
      return;
    }
    const finished = new Promise<void>((resolve) => {
      this.child.once("exit", () => resolve());
    });
    try {
      await this.request({ op: "shutdown" });
    } catch {
      // a dying process may drop the final reply; the exit is what matters
    }
    await finished;
  }

  /** Hard kill, for cleanup paths where the protocol can no longer be trusted. */
  kill(): void {
    if (!this.exited) {
      this.child.kill();
    }
  }

  private onLine(line: string): void {
    if (!line.trim()) {
      return;
    }
    let reply: Record<string, unknown>;
    try {
      reply = JSON.parse(line) as Record<string, unknown>;
    } catch {
      this.failAll(new TransportError(`unparseable server reply: ${line}`));
      this.kill();
      return;
    }
    const id = reply.id;
    const entry = typeof id === "number" ? this.pending.get(id) : undefined;
    if (!entry) {
      // replies to ids we never issued indicate a desynced stream
      this.failAll(new TransportError(`reply for unknown request id ${String(id)}`));
      this.kill();
      return;
    }
    this.pending.delete(id as number);
    if (reply.ok) {
      entry.resolve((reply.result ?? {}) as Record<string, unknown>);
    } else {
      const err = (reply.error ?? {}) as { type?: string; message?: string };
      entry.reject(new NativeError(err.type ?? "UnknownError", err.message ?? ""));
    }
  }

  private failAll(err: Error): void {
    const waiting = [...this.pending.values()];
    this.pending.clear();
    for (const entry of waiting) {
      entry.reject(err);
    }
  }
}
