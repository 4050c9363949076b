/** Console wiring: stream client, render loop, command box, presets. */

import { StreamClient } from "./client.js";
import { applyFrame, newViewState } from "./frames.js";
import { renderArena } from "./render.js";
import { isStateFrame } from "./types.js";

const view = newViewState();

const canvas = document.getElementById("arena") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const badge = document.getElementById("fsm-badge")!;
const banner = document.getElementById("banner")!;
const log = document.getElementById("log")!;
const input = document.getElementById("command") as HTMLInputElement;
const sendButton = document.getElementById("send") as HTMLButtonElement;
const statsLine = document.getElementById("stats")!;

const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/stream`;

function appendLog(text: string, cls = ""): void {
  const line = document.createElement("div");
  line.textContent = text;
  if (cls) {
    line.className = cls;
  }
  log.appendChild(line);
  while (log.childElementCount > 250) {
    log.removeChild(log.firstChild!);
  }
  log.scrollTop = log.scrollHeight;
}

let renderedEvents = 0;

const client = new StreamClient(wsUrl, (url) => new WebSocket(url), {
  onFrame: (frame) => {
    if (isStateFrame(frame)) {
      if (applyFrame(view, frame)) {
        badge.textContent = frame.fsm;
        badge.dataset.state = frame.fsm;
        while (renderedEvents < view.eventLog.length) {
          const event = view.eventLog[renderedEvents]!;
          const extras = Object.entries(event)
            .filter(([k]) => k !== "t" && k !== "kind")
            .map(([k, v]) => `${k}=${JSON.stringify(v)}`)
            .join(" ");
          appendLog(`${event.t.toFixed(2)}  ${event.kind}  ${extras}`);
          renderedEvents += 1;
        }
      }
    } else if (frame.type === "ack") {
      appendLog(`> accepted: ${frame.transcript}`, "ok");
      input.value = "";
    } else if (frame.type === "error") {
      appendLog(`! ${frame.error}`, "err");
    }
  },
  onStatus: (status, retryMs) => {
    if (status === "open") {
      banner.hidden = true;
    } else {
      banner.hidden = false;
      banner.textContent =
        status === "connecting"
          ? "connecting..."
          : `disconnected; retrying in ${(retryMs ?? 0) / 1000}s`;
    }
  },
});

function submit(): void {
  const text = input.value.trim();
  if (!text) {
    return;
  }
  if (!client.sendCommand(text)) {
    appendLog("! not connected", "err");
  }
}

sendButton.addEventListener("click", submit);
input.addEventListener("keydown", (ev) => {
  if (ev.key === "Enter") {
    submit();
  }
});

for (const button of document.querySelectorAll<HTMLButtonElement>("[data-preset]")) {
  button.addEventListener("click", async () => {
    const preset = button.dataset.preset!;
    const response = await fetch(`/scenario/${preset}`, { method: "POST" });
    const body = await response.json();
    appendLog(`> preset ${preset}: ${JSON.stringify(body)}`, response.ok ? "ok" : "err");
  });
}

function frameLoop(): void {
  renderArena(ctx, view, canvas.width, canvas.height);
  statsLine.textContent =
    view.frame === null
      ? "no frames yet"
      : `t=${view.frame.time.toFixed(1)}s  frames=${view.framesApplied}  dropped=${view.framesDropped}`;
  requestAnimationFrame(frameLoop);
}

client.connect();
requestAnimationFrame(frameLoop);
