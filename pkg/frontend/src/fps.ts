// Rolling frames-per-second counter over a fixed window.

export class FpsCounter {
  private readonly windowMs: number
  private stamps: number[] = []

  constructor(windowMs = 2000) {
    this.windowMs = windowMs
  }

  tick(nowMs: number): void {
    this.stamps.push(nowMs)
    const cutoff = nowMs - this.windowMs
    while (this.stamps.length > 0 && this.stamps[0] < cutoff) {
      this.stamps.shift()
    }
  }

  fps(nowMs: number): number {
    const cutoff = nowMs - this.windowMs
    this.stamps = this.stamps.filter((t) => t >= cutoff)
    return (this.stamps.length * 1000) / this.windowMs
  }
}
