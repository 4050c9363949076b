"""Message transport: a seeded discrete-event bus and a live socket framing.

The simulated bus is the deterministic heart of every batch run: given the
same seed and the same send sequence it produces a byte-identical delivery
log.  Latency is sampled uniformly in [base - jitter, base + jitter]
(clamped at zero) and drops are Bernoulli; per-pair FIFO is deliberately
not guaranteed, so protocol layers must tolerate reordering.

The live transport frames the same JSON payloads over a stream socket with
a 4-byte big-endian length prefix.
"""

from __future__ import annotations

import heapq
import json
import random
import socket
import struct
import threading
from dataclasses import dataclass
from queue import Queue
from typing import Any, Iterator

MAX_FRAME_BYTES = 1 << 20


@dataclass(frozen=True)
class FaultModel:
    latency_base: float = 0.02
    latency_jitter: float = 0.0
    drop_prob: float = 0.0
    seed: int = 0


@dataclass
class Envelope:
    msg_id: str
    sender: str
    recipient: str
    payload: dict[str, Any]
    sent_at: float
    deliver_at: float
    dropped: bool


@dataclass(frozen=True)
class Delivery:
    deliver_at: float
    recipient: str
    payload: dict[str, Any]
    msg_id: str
    sender: str


class UnknownRecipient(KeyError):
    pass


class SimBus:
    """Single-owner simulated transport stepped by the harness clock."""

    def __init__(self, fault_model: FaultModel | None = None):
        self.fault_model = fault_model or FaultModel()
        self._rng = random.Random(self.fault_model.seed)
        self._recipients: set[str] = set()
        self._heap: list[tuple[float, str, Envelope]] = []
        self._counter = 0
        self.now = 0.0
        self.sent_count = 0
        self.dropped_count = 0
        self.delivered_count = 0
        self.log: list[dict[str, Any]] = []

    def register(self, agent_id: str) -> None:
        self._recipients.add(agent_id)

    def send(self, payload: dict[str, Any], sender: str, recipient: str) -> str:
        if recipient not in self._recipients:
            raise UnknownRecipient(recipient)
        self._counter += 1
        msg_id = f"m{self._counter:06d}"
        # Always draw both samples so the random stream shape does not
        # depend on the drop outcome.
        drop_draw = self._rng.random()
        jitter = self.fault_model.latency_jitter
        latency = self.fault_model.latency_base + self._rng.uniform(-jitter, jitter)
        latency = max(0.0, latency)
        dropped = drop_draw < self.fault_model.drop_prob
        envelope = Envelope(
            msg_id=msg_id,
            sender=sender,
            recipient=recipient,
            payload=payload,
            sent_at=self.now,
            deliver_at=self.now + latency,
            dropped=dropped,
        )
        self.sent_count += 1
        self.log.append(
            {
                "event": "send",
                "msg_id": msg_id,
                "sender": sender,
                "recipient": recipient,
                "sent_at": self.now,
                "deliver_at": envelope.deliver_at,
                "dropped": dropped,
                "type": str(payload.get("type", "")),
            }
        )
        if dropped:
            self.dropped_count += 1
        else:
            heapq.heappush(self._heap, (envelope.deliver_at, msg_id, envelope))
        return msg_id

    def broadcast(self, payload: dict[str, Any], sender: str) -> list[str]:
        return [
            self.send(payload, sender, rid)
            for rid in sorted(self._recipients)
            if rid != sender
        ]

    def advance(self, until: float) -> list[Delivery]:
        """Deliver everything due by ``until`` in (deliver_at, msg_id) order."""
        if until < self.now:
            raise ValueError(f"cannot advance backwards: {until} < {self.now}")
        out: list[Delivery] = []
        while self._heap and self._heap[0][0] <= until:
            deliver_at, msg_id, envelope = heapq.heappop(self._heap)
            self.delivered_count += 1
            self.log.append(
                {
                    "event": "deliver",
                    "msg_id": msg_id,
                    "recipient": envelope.recipient,
                    "deliver_at": deliver_at,
                    "type": str(envelope.payload.get("type", "")),
                }
            )
            out.append(
                Delivery(
                    deliver_at=deliver_at,
                    recipient=envelope.recipient,
                    payload=envelope.payload,
                    msg_id=msg_id,
                    sender=envelope.sender,
                )
            )
        self.now = until
        return out

    @property
    def pending(self) -> int:
        return len(self._heap)

    def export_log(self) -> str:
        """Line-delimited JSON delivery log, stable across identical runs."""
        return "\n".join(json.dumps(entry, sort_keys=True) for entry in self.log)


# ---------------------------------------------------------------------------
# Live framing: 4-byte big-endian length prefix + UTF-8 JSON payload
# ---------------------------------------------------------------------------

def encode_frame(payload: dict[str, Any]) -> bytes:
    body = json.dumps(payload, separators=(",", ":")).encode("utf-8")
    if len(body) > MAX_FRAME_BYTES:
        raise ValueError("frame too large")
    return struct.pack(">I", len(body)) + body


class FrameDecoder:
    """Incremental decoder for length-prefixed JSON frames."""

    def __init__(self):
        self._buffer = bytearray()

    def feed(self, data: bytes) -> Iterator[dict[str, Any]]:
        self._buffer.extend(data)
        while True:
            if len(self._buffer) < 4:
                return
            (length,) = struct.unpack(">I", self._buffer[:4])
            if length > MAX_FRAME_BYTES:
                raise ValueError("frame too large")
            if len(self._buffer) < 4 + length:
                return
            body = bytes(self._buffer[4 : 4 + length])
            del self._buffer[: 4 + length]
            yield json.loads(body.decode("utf-8"))


class FrameConnection:
    """Blocking reader/writer pair over a connected stream socket."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._decoder = FrameDecoder()
        self._write_lock = threading.Lock()

    def send(self, payload: dict[str, Any]) -> None:
        data = encode_frame(payload)
        with self._write_lock:
            self._sock.sendall(data)

    def recv(self) -> dict[str, Any] | None:
        """Next frame, or None once the peer closes."""
        while True:
            for frame in self._decoder.feed(b""):
                return frame
            data = self._sock.recv(65536)
            if not data:
                return None
            for frame in self._decoder.feed(data):
                return frame

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class FrameServer:
    """Accepts connections and funnels inbound frames into one queue.

    Each inbound item is ``(connection, frame)``; outbound sends go through
    the connection objects.  One reader thread per connection keeps hand-off
    into the queue serialized.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._listener = socket.create_server((host, port))
        self.address = self._listener.getsockname()
        self.inbox: Queue = Queue()
        self.connections: list[FrameConnection] = []
        self._lock = threading.Lock()
        self._closing = False
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def _accept_loop(self) -> None:
        while not self._closing:
            try:
                sock, _ = self._listener.accept()
            except OSError:
                return
            conn = FrameConnection(sock)
            with self._lock:
                self.connections.append(conn)
            threading.Thread(target=self._read_loop, args=(conn,), daemon=True).start()

    def _read_loop(self, conn: FrameConnection) -> None:
        while True:
            try:
                frame = conn.recv()
            except (OSError, ValueError):
                frame = None
            if frame is None:
                with self._lock:
                    if conn in self.connections:
                        self.connections.remove(conn)
                return
            self.inbox.put((conn, frame))

    def broadcast(self, payload: dict[str, Any]) -> None:
        with self._lock:
            conns = list(self.connections)
        for conn in conns:
            try:
                conn.send(payload)
            except OSError:
                pass

    def close(self) -> None:
        self._closing = True
        self._listener.close()
        with self._lock:
            conns = list(self.connections)
            self.connections.clear()
        for conn in conns:
            conn.close()


def connect_frames(host: str, port: int, timeout: float = 5.0) -> FrameConnection:
    sock = socket.create_connection((host, port), timeout=timeout)
    sock.settimeout(None)
    return FrameConnection(sock)
