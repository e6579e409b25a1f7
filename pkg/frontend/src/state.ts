// Session state store. Thin-client rule: every score, flag, label, and
// message here was received from the server verbatim; the UI never
// computes posture math of its own. Overlay joint *positions* come from
// the locally captured frame; their flag state comes only from this store.

import type {
  ClassificationMsg,
  EvaluationMsg,
  FeedbackMsg,
  ServerMsg,
  StartedMsg,
  SummaryMsg,
} from './protocol'

export type ConnectionStatus =
  | 'idle'
  | 'connecting'
  | 'connected'
  | 'reconnecting'
  | 'closed'

export interface TextFeedback {
  message: string
  severity: 'minor' | 'major'
  joint: string | null
  at: number
}

export type Listener = (store: SessionStore) => void

export class SessionStore {
  status: ConnectionStatus = 'idle'
  started: StartedMsg | null = null
  evaluation: EvaluationMsg | null = null
  classification: ClassificationMsg | null = null
  textFeedback: TextFeedback | null = null
  summary: SummaryMsg | null = null
  lastError: { code: string; detail: string } | null = null
  /** joint name -> highlight color, for the evaluation frame currently shown */
  overlayColors = new Map<string, string>()
  /** called for each voice feedback event, in arrival order */
  onVoice: ((message: string) => void) | null = null

  private listeners: Listener[] = []

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn)
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn)
    }
  }

  private notify(): void {
    for (const fn of this.listeners) fn(this)
  }

  setStatus(status: ConnectionStatus): void {
    this.status = status
    if (status === 'reconnecting' || status === 'closed') {
      this.started = null
    }
    this.notify()
  }

  /** Apply one server message; the only mutation path for posture data. */
  apply(msg: ServerMsg): void {
    switch (msg.type) {
      case 'started':
        this.started = msg
        this.summary = null
        this.evaluation = null
        this.classification = null
        this.overlayColors.clear()
        break
      case 'evaluation':
        this.evaluation = msg
        // overlay events for this frame follow; start from a clean slate
        this.overlayColors.clear()
        break
      case 'classification':
        this.classification = msg
        break
      case 'feedback':
        this.applyFeedback(msg)
        break
      case 'summary':
        this.summary = msg
        break
      case 'error':
        this.lastError = { code: msg.code, detail: msg.detail }
        break
    }
    this.notify()
  }

  private applyFeedback(msg: FeedbackMsg): void {
    if (msg.channel === 'overlay' && msg.joint) {
      this.overlayColors.set(msg.joint, msg.color ?? '#ffb300')
    } else if (msg.channel === 'text' && msg.message) {
      this.textFeedback = {
        message: msg.message,
        severity: msg.severity,
        joint: msg.joint,
        at: msg.t,
      }
    } else if (msg.channel === 'voice' && msg.message) {
      this.onVoice?.(msg.message)
    }
  }

  /** Joints the server flagged in the latest evaluation, with their
   * overlay colors. Only joints in the announced angle table render. */
  flaggedJoints(): Map<string, string> {
    const out = new Map<string, string>()
    if (!this.evaluation) return out
    const known = new Set(this.started?.angles ?? [])
    for (const joint of this.evaluation.joints) {
      if (!joint.flagged) continue
      if (known.size > 0 && !known.has(joint.name)) continue
      out.set(joint.name, this.overlayColors.get(joint.name) ?? '#ffb300')
    }
    return out
  }
}
