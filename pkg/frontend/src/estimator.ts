// In-browser pose estimation, treated as a black box that yields 17
// keypoints in COCO order at the camera rate. The MoveNet adapter maps
// the library's named keypoints onto the wire order; tests substitute a
// scripted estimator.

import { COCO_KEYPOINT_NAMES, NUM_KEYPOINTS, type PoseKeypoint } from './protocol'

export type PoseCallback = (keypoints: PoseKeypoint[]) => void

export interface PoseEstimator {
  start(video: HTMLVideoElement, onPose: PoseCallback): Promise<void>
  stop(): void
}

interface NamedKeypoint {
  x: number
  y: number
  score?: number
  name?: string
}

/** Reorder a named keypoint list into COCO wire order; unseen joints get
 * confidence 0 so the server masks them. */
export function toCocoOrder(named: NamedKeypoint[]): PoseKeypoint[] {
  const byName = new Map<string, NamedKeypoint>()
  for (const point of named) {
    if (point.name) byName.set(point.name, point)
  }
  return COCO_KEYPOINT_NAMES.map((name) => {
    const point = byName.get(name)
    if (!point) return { x: 0, y: 0, score: 0 }
    return { x: point.x, y: point.y, score: point.score ?? 0 }
  })
}

export class MoveNetEstimator implements PoseEstimator {
  private detector: { estimatePoses(v: HTMLVideoElement): Promise<{ keypoints: NamedKeypoint[] }[]>; dispose(): void } | null = null
  private running = false
  private rafHandle = 0

  async start(video: HTMLVideoElement, onPose: PoseCallback): Promise<void> {
    const tf = await import('@tensorflow/tfjs')
    await tf.ready()
    const poseDetection = await import('@tensorflow-models/pose-detection')
    this.detector = await poseDetection.createDetector(
      poseDetection.SupportedModels.MoveNet,
      { modelType: poseDetection.movenet.modelType.SINGLEPOSE_LIGHTNING },
    )
    this.running = true
    const loop = async () => {
      if (!this.running || !this.detector) return
      try {
        const poses = await this.detector.estimatePoses(video)
        if (poses.length > 0) {
          const ordered = toCocoOrder(poses[0].keypoints)
          if (ordered.length === NUM_KEYPOINTS) onPose(ordered)
        }
      } catch {
        // transient estimator hiccup: skip the frame, keep the loop alive
      }
      this.rafHandle = requestAnimationFrame(loop)
    }
    this.rafHandle = requestAnimationFrame(loop)
  }

  stop(): void {
    this.running = false
    cancelAnimationFrame(this.rafHandle)
    this.detector?.dispose()
    this.detector = null
  }
}

/** Deterministic scripted estimator for tests and camera-less demos. */
export class ScriptedEstimator implements PoseEstimator {
  private timer: ReturnType<typeof setInterval> | null = null
  private readonly frames: PoseKeypoint[][]
  private readonly intervalMs: number
  private cursor = 0

  constructor(frames: PoseKeypoint[][], fps = 30) {
    this.frames = frames
    this.intervalMs = 1000 / fps
  }

  async start(_video: HTMLVideoElement, onPose: PoseCallback): Promise<void> {
    this.timer = setInterval(() => {
      onPose(this.frames[this.cursor % this.frames.length])
      this.cursor += 1
    }, this.intervalMs)
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer)
    this.timer = null
  }
}
