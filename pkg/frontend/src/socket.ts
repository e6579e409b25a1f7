// WebSocket session client: starts a session once connected, streams
// frame records, and reconnects with a brand-new session after an
// unintentional drop (session state lives server-side and cannot be
// resumed).

import type { FrameRecord, ServerMsg } from './protocol'
import { SessionStore } from './state'

export interface SocketLike {
  send(data: string): void
  close(): void
  onopen: (() => void) | null
  onmessage: ((event: { data: unknown }) => void) | null
  onclose: (() => void) | null
  onerror: ((err: unknown) => void) | null
}

export type SocketFactory = (url: string) => SocketLike

export interface SessionClientOptions {
  poseId: string
  variant?: 'float' | 'quantized'
  factory?: SocketFactory
  reconnectDelayMs?: number
  maxReconnectDelayMs?: number
}

const defaultFactory: SocketFactory = (url) =>
  new WebSocket(url) as unknown as SocketLike

export class SessionClient {
  readonly store: SessionStore
  private readonly url: string
  private readonly factory: SocketFactory
  private poseId: string
  private readonly variant: 'float' | 'quantized'
  private socket: SocketLike | null = null
  private closedOnPurpose = false
  private reconnectDelay: number
  private readonly baseDelay: number
  private readonly maxDelay: number
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null
  framesSent = 0
  socketsOpened = 0

  constructor(url: string, store: SessionStore, options: SessionClientOptions) {
    this.url = url
    this.store = store
    this.poseId = options.poseId
    this.variant = options.variant ?? 'float'
    this.factory = options.factory ?? defaultFactory
    this.baseDelay = options.reconnectDelayMs ?? 1000
    this.maxDelay = options.maxReconnectDelayMs ?? 10_000
    this.reconnectDelay = this.baseDelay
  }

  connect(): void {
    this.closedOnPurpose = false
    this.store.setStatus(this.socketsOpened === 0 ? 'connecting' : 'reconnecting')
    const socket = this.factory(this.url)
    this.socket = socket
    this.socketsOpened += 1
    socket.onopen = () => {
      this.reconnectDelay = this.baseDelay
      this.store.setStatus('connected')
      socket.send(
        JSON.stringify({ type: 'start', pose_id: this.poseId, variant: this.variant }),
      )
    }
    socket.onmessage = (event) => {
      let msg: ServerMsg
      try {
        msg = JSON.parse(String(event.data)) as ServerMsg
      } catch {
        return // ignore non-JSON traffic
      }
      this.store.apply(msg)
    }
    socket.onerror = () => {
      // onclose follows; nothing to do here
    }
    socket.onclose = () => {
      this.socket = null
      if (this.closedOnPurpose) {
        this.store.setStatus('closed')
        return
      }
      this.store.setStatus('reconnecting')
      this.reconnectTimer = setTimeout(() => this.connect(), this.reconnectDelay)
      this.reconnectDelay = Math.min(this.reconnectDelay * 2, this.maxDelay)
    }
  }

  /** True once the server acknowledged the session. */
  get sessionActive(): boolean {
    return this.store.started !== null && this.socket !== null
  }

  /** Stream one frame record; silently dropped when no session is active. */
  sendFrame(record: FrameRecord): boolean {
    if (!this.sessionActive || !this.socket) return false
    this.socket.send(JSON.stringify({ type: 'frame', ...record }))
    this.framesSent += 1
    return true
  }

  /** Ask for the session summary; keeps the socket open. */
  end(): void {
    this.socket?.send(JSON.stringify({ type: 'end' }))
  }

  /** Intentional shutdown: no reconnect. */
  close(): void {
    this.closedOnPurpose = true
    if (this.reconnectTimer !== null) {
      clearTimeout(this.reconnectTimer)
      this.reconnectTimer = null
    }
    this.socket?.close()
    this.socket = null
    this.store.setStatus('closed')
  }

  switchPose(poseId: string): void {
    this.poseId = poseId
    this.end()
    this.socket?.send(
      JSON.stringify({ type: 'start', pose_id: poseId, variant: this.variant }),
    )
  }
}
