import { describe, expect, it, vi } from "vitest";

import { Backoff } from "../src/backoff.js";
import { SocketLike, StreamClient } from "../src/client.js";

class FakeSocket implements SocketLike {
  sent: string[] = [];
  closed = false;
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
  }
}

describe("Backoff", () => {
  it("doubles up to the ceiling and resets", () => {
    const backoff = new Backoff(100, 1000, 2);
    expect(backoff.nextDelay()).toBe(100);
    expect(backoff.nextDelay()).toBe(200);
    expect(backoff.nextDelay()).toBe(400);
    expect(backoff.nextDelay()).toBe(800);
    expect(backoff.nextDelay()).toBe(1000);
    expect(backoff.nextDelay()).toBe(1000);
    backoff.reset();
    expect(backoff.nextDelay()).toBe(100);
  });
});

describe("StreamClient", () => {
  it("delivers parsed frames to the hook", () => {
    const sockets: FakeSocket[] = [];
    const frames: unknown[] = [];
    const client = new StreamClient(
      "ws://test",
      () => {
        const socket = new FakeSocket();
        sockets.push(socket);
        return socket;
      },
      { onFrame: (frame) => frames.push(frame) },
    );
    client.connect();
    sockets[0]!.onopen?.();
    sockets[0]!.onmessage?.({ data: JSON.stringify({ type: "ack", transcript: "hi" }) });
    expect(frames).toEqual([{ type: "ack", transcript: "hi" }]);
  });

  it("sends exactly one frame per command, none when disconnected", () => {
    const sockets: FakeSocket[] = [];
    const client = new StreamClient("ws://test", () => {
      const socket = new FakeSocket();
      sockets.push(socket);
      return socket;
    });
    expect(client.sendCommand("early")).toBe(false);
    client.connect();
    sockets[0]!.onopen?.();
    expect(client.sendCommand("open robot system")).toBe(true);
    expect(client.sendCommand("open robot system")).toBe(true);
    expect(sockets[0]!.sent.length).toBe(2); // one frame per action, no retries
    expect(JSON.parse(sockets[0]!.sent[0]!)).toEqual({
      type: "command",
      transcript: "open robot system",
    });
  });

  it("reconnects with exponential backoff after close", async () => {
    vi.useFakeTimers();
    const sockets: FakeSocket[] = [];
    const statuses: [string, number | undefined][] = [];
    const client = new StreamClient(
      "ws://test",
      () => {
        const socket = new FakeSocket();
        sockets.push(socket);
        return socket;
      },
      { onStatus: (status, retry) => statuses.push([status, retry]) },
      new Backoff(100, 1000, 2),
    );
    client.connect();
    sockets[0]!.onclose?.();
    expect(statuses.at(-1)).toEqual(["closed", 100]);
    vi.advanceTimersByTime(100);
    expect(sockets.length).toBe(2);
    sockets[1]!.onclose?.();
    expect(statuses.at(-1)).toEqual(["closed", 200]);
    vi.advanceTimersByTime(200);
    expect(sockets.length).toBe(3);
    // a successful open resets the backoff
    sockets[2]!.onopen?.();
    sockets[2]!.onclose?.();
    expect(statuses.at(-1)).toEqual(["closed", 100]);
    client.stop();
    vi.useRealTimers();
  });

  it("stops reconnecting once stopped", () => {
    vi.useFakeTimers();
    const sockets: FakeSocket[] = [];
    const client = new StreamClient("ws://test", () => {
      const socket = new FakeSocket();
      sockets.push(socket);
      return socket;
    });
    client.connect();
    client.stop();
    sockets[0]!.onclose?.();
    vi.advanceTimersByTime(60_000);
    expect(sockets.length).toBe(1);
    expect(sockets[0]!.closed).toBe(true);
    vi.useRealTimers();
  });
});
