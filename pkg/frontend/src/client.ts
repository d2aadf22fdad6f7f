/**
 * Child-process client for the pensim bridge.
 *
 * Spawns `python -m pensim.bridge` and correlates line-delimited JSON
 * requests with responses by id. One in-flight pipeline per process; calls
 * may be issued concurrently and are answered in order.
 */

import { ChildProcess, spawn } from "node:child_process";
import * as readline from "node:readline";
import type { Request, Response } from "./protocol.js";

export interface BridgeOptions {
  /** Python interpreter; defaults to $PENSIM_PYTHON or "python3". */
  python?: string;
  /** Working directory for the child (a checkout with pensim installed). */
  cwd?: string;
}

export class BridgeClient {
  private proc: ChildProcess;
  private pending = new Map<number, { resolve: (r: Response) => void; reject: (e: Error) => void }>();
  private nextId = 1;
  private closed = false;

  constructor(options: BridgeOptions = {}) {
    const python = options.python ?? process.env.PENSIM_PYTHON ?? "python3";
    this.proc = spawn(python, ["-m", "pensim.bridge"], {
      cwd: options.cwd,
      stdio: ["pipe", "pipe", "inherit"],
    });
    const rl = readline.createInterface({ input: this.proc.stdout! });
    rl.on("line", (line) => this.onLine(line));
    this.proc.on("exit", (code) => {
      const err = new Error(`bridge exited with code ${code}`);
      for (const { reject } of this.pending.values()) reject(err);
      this.pending.clear();
      this.closed = true;
    });
  }

  private onLine(line: string): void {
    let reply: Response;
    try {
      reply = JSON.parse(line) as Response;
    } catch {
      return; // stray output; protocol replies are always valid JSON
    }
    const waiter = this.pending.get(reply.id as number);
    if (waiter) {
      this.pending.delete(reply.id as number);
      waiter.resolve(reply);
    }
  }

  call(op: string, params: Record<string, unknown> = {}): Promise<Response> {
    if (this.closed) {
      return Promise.reject(new Error("bridge is closed"));
    }
    const id = this.nextId++;
    const request: Request = { id, op, ...params };
    return new Promise((resolve, reject) => {
      this.pending.set(id, {
        resolve: (reply) => {
          if (!reply.ok) {
            reject(new Error(`bridge error for ${op}: ${reply.error}`));
          } else {
            resolve(reply);
          }
        },
        reject,
      });
      this.proc.stdin!.write(JSON.stringify(request) + "\n");
    });
  }

  close(): void {
    this.closed = true;
    this.proc.stdin?.end();
    this.proc.kill();
  }
}
