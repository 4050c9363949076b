/** Arena-to-canvas mapping that preserves aspect ratio with letterboxing.
 *
 * Arena y points up; canvas y points down, so the transform flips y.
 */

export interface Transform {
  scale: number;
  offsetX: number;
  offsetY: number;
  arenaHeight: number;
}

export function fitTransform(
  arenaWidth: number,
  arenaHeight: number,
  canvasWidth: number,
  canvasHeight: number,
  margin = 0,
): Transform {
  const usableW = canvasWidth - 2 * margin;
  const usableH = canvasHeight - 2 * margin;
  const scale = Math.min(usableW / arenaWidth, usableH / arenaHeight);
  const offsetX = margin + (usableW - arenaWidth * scale) / 2;
  const offsetY = margin + (usableH - arenaHeight * scale) / 2;
  return { scale, offsetX, offsetY, arenaHeight };
}

export function toCanvas(t: Transform, x: number, y: number): [number, number] {
  return [t.offsetX + x * t.scale, t.offsetY + (t.arenaHeight - y) * t.scale];
}
