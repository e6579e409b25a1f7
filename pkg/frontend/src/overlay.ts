// Skeleton overlay rendering. Joint positions come from the local frame;
// which joints light up (and their colors) comes exclusively from server
// state via SessionStore.flaggedJoints().

import {
  JOINT_VERTEX_INDEX,
  NUM_KEYPOINTS,
  SKELETON_EDGES,
  type PoseKeypoint,
} from './protocol'

export const NEUTRAL_COLOR = 'rgba(80, 220, 100, 0.9)'
export const BONE_COLOR = 'rgba(255, 255, 255, 0.55)'

/** COCO vertex index -> highlight color for the flagged joints. */
export function vertexColors(flagged: Map<string, string>): Map<number, string> {
  const out = new Map<number, string>()
  for (const [joint, color] of flagged) {
    const index = JOINT_VERTEX_INDEX[joint]
    if (index !== undefined) out.set(index, color)
  }
  return out
}

export interface DrawOptions {
  mirror: boolean
  width: number
  height: number
  minScore?: number
}

export function drawPose(
  ctx: CanvasRenderingContext2D,
  keypoints: PoseKeypoint[],
  flagged: Map<string, string>,
  options: DrawOptions,
): void {
  const { mirror, width, height } = options
  const minScore = options.minScore ?? 0.3
  if (keypoints.length !== NUM_KEYPOINTS) return
  const colors = vertexColors(flagged)

  const px = (p: PoseKeypoint) => (mirror ? width - p.x : p.x)

  ctx.clearRect(0, 0, width, height)
  ctx.lineWidth = 3
  ctx.strokeStyle = BONE_COLOR
  for (const [a, b] of SKELETON_EDGES) {
    const ka = keypoints[a]
    const kb = keypoints[b]
    if (ka.score < minScore || kb.score < minScore) continue
    ctx.beginPath()
    ctx.moveTo(px(ka), ka.y)
    ctx.lineTo(px(kb), kb.y)
    ctx.stroke()
  }

  keypoints.forEach((point, index) => {
    if (point.score < minScore) return
    const highlight = colors.get(index)
    ctx.beginPath()
    ctx.arc(px(point), point.y, highlight ? 9 : 5, 0, Math.PI * 2)
    ctx.fillStyle = highlight ?? NEUTRAL_COLOR
    ctx.fill()
    if (highlight) {
      ctx.lineWidth = 2
      ctx.strokeStyle = '#ffffff'
      ctx.stroke()
    }
  })
}
