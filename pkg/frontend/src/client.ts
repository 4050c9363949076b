/** WebSocket client for the service stream with reconnect backoff.
 *
 * Each user action maps to exactly one command frame; there is no automatic
 * retry of commands, so the service sees every action once.
 */

import { Backoff } from "./backoff.js";
import { ServiceFrame } from "./types.js";

/* Handler types stay loose so both the browser WebSocket and the ws
 * package satisfy the interface without adapters. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onopen: ((ev: any) => void) | null;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onmessage: ((ev: { data: unknown } & any) => void) | null;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onclose: ((ev: any) => void) | null;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onerror: ((ev: any) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export type ConnectionStatus = "connecting" | "open" | "closed";

export interface ClientHooks {
  onFrame?: (frame: ServiceFrame) => void;
  onStatus?: (status: ConnectionStatus, nextRetryMs?: number) => void;
}

export class StreamClient {
  private socket: SocketLike | null = null;
  private readonly backoff: Backoff;
  private stopped = false;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  commandsSent = 0;

  constructor(
    private readonly url: string,
    private readonly factory: SocketFactory,
    private readonly hooks: ClientHooks = {},
    backoff?: Backoff,
  ) {
    this.backoff = backoff ?? new Backoff();
  }

  connect(): void {
    if (this.stopped) {
      return;
    }
    this.hooks.onStatus?.("connecting");
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.backoff.reset();
      this.hooks.onStatus?.("open");
    };
    socket.onmessage = (ev) => {
      let parsed: unknown;
      try {
        parsed = JSON.parse(String(ev.data));
      } catch {
        return;
      }
      this.hooks.onFrame?.(parsed as ServiceFrame);
    };
    socket.onclose = () => {
      this.socket = null;
      if (this.stopped) {
        return;
      }
      const delay = this.backoff.nextDelay();
      this.hooks.onStatus?.("closed", delay);
      this.retryTimer = setTimeout(() => this.connect(), delay);
    };
    socket.onerror = () => {
      // close handler performs the reconnect
    };
  }

  get connected(): boolean {
    return this.socket !== null;
  }

  /** Send one command frame; returns false when disconnected (no queueing). */
  sendCommand(transcript: string): boolean {
    if (!this.socket) {
      return false;
    }
    this.socket.send(JSON.stringify({ type: "command", transcript }));
    this.commandsSent += 1;
    return true;
  }

  stop(): void {
    this.stopped = true;
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
    }
    this.socket?.close();
    this.socket = null;
  }
}
