/** Console view state: applies frames in timestamp order, drops stale ones.
 *
 * The console holds no simulation state of its own; everything shown is the
 * latest service frame plus bounded history (trails, event log), so closing
 * and reopening reproduces the view from the next frame.
 */

import { isStateFrame, ProtocolEvent, StateFrame } from "./types.js";
import { TrailBuffer } from "./trail.js";

export interface ViewState {
  frame: StateFrame | null;
  framesApplied: number;
  framesDropped: number;
  trails: TrailBuffer;
  eventLog: ProtocolEvent[];
}

export function newViewState(trailCapacity = 120): ViewState {
  return {
    frame: null,
    framesApplied: 0,
    framesDropped: 0,
    trails: new TrailBuffer(trailCapacity),
    eventLog: [],
  };
}

const EVENT_LOG_LIMIT = 200;

export function applyFrame(view: ViewState, raw: unknown): boolean {
  if (!isStateFrame(raw)) {
    return false;
  }
  if (view.frame !== null && raw.tick <= view.frame.tick) {
    view.framesDropped += 1;
    return false;
  }
  const seen = view.frame
    ? new Set(view.frame.events.map((e) => `${e.t}/${e.kind}/${JSON.stringify(e)}`))
    : new Set<string>();
  for (const event of raw.events) {
    const key = `${event.t}/${event.kind}/${JSON.stringify(event)}`;
    if (!seen.has(key) && !view.eventLog.some((e) => `${e.t}/${e.kind}/${JSON.stringify(e)}` === key)) {
      view.eventLog.push(event);
    }
  }
  if (view.eventLog.length > EVENT_LOG_LIMIT) {
    view.eventLog.splice(0, view.eventLog.length - EVENT_LOG_LIMIT);
  }
  for (const robot of raw.robots) {
    view.trails.push(robot.id, robot.x, robot.y);
  }
  view.frame = raw;
  view.framesApplied += 1;
  return true;
}
