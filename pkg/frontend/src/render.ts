/** Canvas painting for the arena view. DOM-free except for the 2D context. */

import { fitTransform, toCanvas, Transform } from "./transform.js";
import { ViewState } from "./frames.js";

const ROBOT_COLORS = ["#2563eb", "#dc2626", "#059669", "#9333ea"];

export function renderArena(
  ctx: CanvasRenderingContext2D,
  view: ViewState,
  canvasWidth: number,
  canvasHeight: number,
): void {
  ctx.clearRect(0, 0, canvasWidth, canvasHeight);
  const frame = view.frame;
  if (!frame) {
    return;
  }
  const t = fitTransform(frame.arena.width, frame.arena.height, canvasWidth, canvasHeight, 12);

  // arena boundary
  ctx.strokeStyle = "#94a3b8";
  ctx.lineWidth = 2;
  const [x0, y0] = toCanvas(t, 0, frame.arena.height);
  ctx.strokeRect(x0, y0, frame.arena.width * t.scale, frame.arena.height * t.scale);

  drawLocations(ctx, t, frame.locations);
  drawTrails(ctx, t, view);
  drawObjects(ctx, t, frame.objects);
  drawRobots(ctx, t, frame.robots);
}

function drawLocations(ctx: CanvasRenderingContext2D, t: Transform, locations: ViewStateFrameLocations): void {
  ctx.fillStyle = "#64748b";
  ctx.font = "11px sans-serif";
  for (const loc of locations) {
    const [cx, cy] = toCanvas(t, loc.x, loc.y);
    ctx.beginPath();
    ctx.moveTo(cx - 5, cy);
    ctx.lineTo(cx + 5, cy);
    ctx.moveTo(cx, cy - 5);
    ctx.lineTo(cx, cy + 5);
    ctx.strokeStyle = "#64748b";
    ctx.lineWidth = 1;
    ctx.stroke();
    ctx.fillText(loc.id, cx + 6, cy - 6);
  }
}

type ViewStateFrameLocations = { id: string; x: number; y: number }[];

function drawTrails(ctx: CanvasRenderingContext2D, t: Transform, view: ViewState): void {
  view.trails.robots().forEach((robotId, index) => {
    const trail = view.trails.get(robotId);
    if (trail.length < 2) {
      return;
    }
    ctx.beginPath();
    trail.forEach(([x, y], i) => {
      const [cx, cy] = toCanvas(t, x, y);
      if (i === 0) {
        ctx.moveTo(cx, cy);
      } else {
        ctx.lineTo(cx, cy);
      }
    });
    ctx.strokeStyle = ROBOT_COLORS[index % ROBOT_COLORS.length] + "66";
    ctx.lineWidth = 1.5;
    ctx.stroke();
  });
}

function drawObjects(ctx: CanvasRenderingContext2D, t: Transform, objects: ViewStateFrameLocations): void {
  for (const obj of objects) {
    const [cx, cy] = toCanvas(t, obj.x, obj.y);
    ctx.fillStyle = "#f59e0b";
    ctx.beginPath();
    ctx.arc(cx, cy, 6, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillStyle = "#78350f";
    ctx.font = "bold 10px sans-serif";
    ctx.fillText(obj.id, cx - 3, cy + 3.5);
  }
}

function drawRobots(
  ctx: CanvasRenderingContext2D,
  t: Transform,
  robots: { id: string; x: number; y: number; theta: number; carrying: string | null }[],
): void {
  robots.forEach((robot, index) => {
    const color = ROBOT_COLORS[index % ROBOT_COLORS.length] ?? "#2563eb";
    const [cx, cy] = toCanvas(t, robot.x, robot.y);
    const radius = Math.max(7, 0.11 * t.scale);
    ctx.fillStyle = color;
    ctx.beginPath();
    ctx.arc(cx, cy, radius, 0, 2 * Math.PI);
    ctx.fill();
    // heading arrow (canvas y is flipped)
    const hx = cx + 1.8 * radius * Math.cos(robot.theta);
    const hy = cy - 1.8 * radius * Math.sin(robot.theta);
    ctx.strokeStyle = color;
    ctx.lineWidth = 2.5;
    ctx.beginPath();
    ctx.moveTo(cx, cy);
    ctx.lineTo(hx, hy);
    ctx.stroke();
    ctx.fillStyle = "#0f172a";
    ctx.font = "11px sans-serif";
    ctx.fillText(robot.id + (robot.carrying ? ` [${robot.carrying}]` : ""), cx + radius + 3, cy + 4);
  });
}
