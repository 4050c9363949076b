/** Fixed-capacity position history per robot for trail polylines. */

export class TrailBuffer {
  private readonly capacity: number;
  private readonly trails = new Map<string, Array<[number, number]>>();

  constructor(capacity = 120) {
    this.capacity = capacity;
  }

  push(robotId: string, x: number, y: number): void {
    let trail = this.trails.get(robotId);
    if (!trail) {
      trail = [];
      this.trails.set(robotId, trail);
    }
    trail.push([x, y]);
    if (trail.length > this.capacity) {
      trail.splice(0, trail.length - this.capacity);
    }
  }

  get(robotId: string): ReadonlyArray<[number, number]> {
    return this.trails.get(robotId) ?? [];
  }

  robots(): string[] {
    return [...this.trails.keys()].sort();
  }

  clear(): void {
    this.trails.clear();
  }
}
