// Wire protocol shared with the session server: one JSON object per
// message, discriminated by `type`. The `frame` payload embeds a
// .kpjsonl record verbatim (t, id, kp[51]).

export interface FrameRecord {
  t: number
  id: number
  kp: number[]
}

export interface StartMsg {
  type: 'start'
  pose_id: string
  variant?: 'float' | 'quantized'
}

export interface FrameMsg extends FrameRecord {
  type: 'frame'
}

export interface EndMsg {
  type: 'end'
}

export type ClientMsg = StartMsg | FrameMsg | EndMsg

export interface StartedMsg {
  type: 'started'
  session_id: string
  pose_id: string
  display_name: string
  angle_table_version: string
  angles: string[]
  window: number
  stride: number
  variant: string
  class_names: string[]
}

export interface JointEval {
  name: string
  signed_deviation_deg: number
  deviation_deg: number
  masked: boolean
  flagged: boolean
}

export interface EvaluationMsg {
  type: 'evaluation'
  frame_id: number
  t: number
  pose_id: string
  score: number
  score_unclamped: number
  evaluated_joint_count: number
  joints: JointEval[]
}

export interface ClassificationMsg {
  type: 'classification'
  frame_id: number
  t: number
  label: string
  label_index: number
  confidence: number
}

export interface FeedbackMsg {
  type: 'feedback'
  frame_id: number
  t: number
  channel: 'overlay' | 'text' | 'voice'
  joint: string | null
  severity: 'minor' | 'major'
  message?: string
  color?: string
}

export interface SummaryMsg {
  type: 'summary'
  frames: number
  frames_received: number
  drops: number
  mean_score: number | null
  min_score: number | null
  flag_counts: Record<string, number>
  duration_ms: number
}

export interface ErrorMsg {
  type: 'error'
  code: string
  detail: string
  frame_id?: number
  dropped?: boolean
}

export type ServerMsg =
  | StartedMsg
  | EvaluationMsg
  | ClassificationMsg
  | FeedbackMsg
  | SummaryMsg
  | ErrorMsg

export const COCO_KEYPOINT_NAMES = [
  'nose',
  'left_eye',
  'right_eye',
  'left_ear',
  'right_ear',
  'left_shoulder',
  'right_shoulder',
  'left_elbow',
  'right_elbow',
  'left_wrist',
  'right_wrist',
  'left_hip',
  'right_hip',
  'left_knee',
  'right_knee',
  'left_ankle',
  'right_ankle',
] as const

export const NUM_KEYPOINTS = COCO_KEYPOINT_NAMES.length

// Skeleton edges for the overlay, as index pairs in COCO order.
export const SKELETON_EDGES: ReadonlyArray<readonly [number, number]> = [
  [5, 6], // shoulders
  [5, 7],
  [7, 9], // left arm
  [6, 8],
  [8, 10], // right arm
  [5, 11],
  [6, 12], // torso sides
  [11, 12], // hips
  [11, 13],
  [13, 15], // left leg
  [12, 14],
  [14, 16], // right leg
]

// Vertex keypoint for each tracked angle name: the joint the server flags.
export const JOINT_VERTEX_INDEX: Record<string, number> = {
  left_elbow: 7,
  right_elbow: 8,
  left_shoulder: 5,
  right_shoulder: 6,
  left_hip: 11,
  right_hip: 12,
  left_knee: 13,
  right_knee: 14,
}

export interface PoseKeypoint {
  x: number
  y: number
  score: number
}

/** Flatten 17 keypoints (COCO order) into a frame record. */
export function toFrameRecord(
  keypoints: PoseKeypoint[],
  t: number,
  id: number,
): FrameRecord {
  if (keypoints.length !== NUM_KEYPOINTS) {
    throw new Error(`expected ${NUM_KEYPOINTS} keypoints, got ${keypoints.length}`)
  }
  const kp: number[] = []
  for (const point of keypoints) {
    kp.push(point.x, point.y, Math.min(1, Math.max(0, point.score)))
  }
  return { t, id, kp }
}
