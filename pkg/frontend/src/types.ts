/** Mirrors of the service's wire frames (see the service README section). */

export interface RobotFrame {
  id: string;
  x: number;
  y: number;
  theta: number;
  v: number;
  w: number;
  carrying: string | null;
  task: string | null;
}

export interface PointFrame {
  id: string;
  x: number;
  y: number;
}

export interface ProtocolEvent {
  t: number;
  kind: string;
  [key: string]: unknown;
}

export interface StateFrame {
  type: "state";
  tick: number;
  time: number;
  fsm: string;
  robots: RobotFrame[];
  objects: PointFrame[];
  locations: PointFrame[];
  arena: { width: number; height: number };
  events: ProtocolEvent[];
  feedback: { time: number; utterance: string }[];
}

export interface AckFrame {
  type: "ack";
  transcript: string;
}

export interface ErrorFrame {
  type: "error";
  error: string;
}

export type ServiceFrame = StateFrame | AckFrame | ErrorFrame;

export function isStateFrame(frame: unknown): frame is StateFrame {
  return (
    typeof frame === "object" &&
    frame !== null &&
    (frame as { type?: unknown }).type === "state" &&
    typeof (frame as { tick?: unknown }).tick === "number"
  );
}
