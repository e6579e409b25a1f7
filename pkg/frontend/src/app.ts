// Application wiring: camera -> estimator -> session socket -> render.
// Configuration via query string: ?server=127.0.0.1:8765&pose=tree

import { ScriptedEstimator, MoveNetEstimator, type PoseEstimator } from './estimator'
import { FpsCounter } from './fps'
import { drawPose } from './overlay'
import { toFrameRecord, type PoseKeypoint } from './protocol'
import { SessionClient } from './socket'
import { platformSpeechAdapter, SpeechQueue } from './speech'
import { SessionStore } from './state'

interface PoseInfo {
  pose_id: string
  display_name: string
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id)
  if (!node) throw new Error(`missing element #${id}`)
  return node as T
}

function queryConfig() {
  const params = new URLSearchParams(window.location.search)
  return {
    server: params.get('server') ?? window.location.host,
    pose: params.get('pose') ?? 'tree',
    demo: params.get('demo') === '1',
  }
}

async function fetchPoses(server: string): Promise<PoseInfo[]> {
  const response = await fetch(`http://${server}/poses`)
  const doc = (await response.json()) as { poses: PoseInfo[] }
  return doc.poses
}

/** Standing demo skeleton for camera-less smoke runs (?demo=1). */
function demoFrames(width: number, height: number): PoseKeypoint[][] {
  const u = (x: number, y: number): PoseKeypoint => ({
    x: x * width,
    y: y * height,
    score: 0.95,
  })
  const base: PoseKeypoint[] = [
    u(0.5, 0.18), // nose
    u(0.52, 0.16), u(0.48, 0.16), u(0.55, 0.17), u(0.45, 0.17), // eyes, ears
    u(0.6, 0.3), u(0.4, 0.3), // shoulders
    u(0.63, 0.45), u(0.37, 0.45), // elbows
    u(0.64, 0.58), u(0.36, 0.58), // wrists
    u(0.57, 0.55), u(0.43, 0.55), // hips
    u(0.58, 0.75), u(0.42, 0.75), // knees
    u(0.58, 0.93), u(0.42, 0.93), // ankles
  ]
  return [base]
}

async function main(): Promise<void> {
  const config = queryConfig()
  const store = new SessionStore()
  const speech = new SpeechQueue(platformSpeechAdapter())
  store.onVoice = (message) => speech.say(message)

  const video = el<HTMLVideoElement>('camera')
  const canvas = el<HTMLCanvasElement>('overlay')
  const scoreGauge = el<HTMLElement>('score-gauge')
  const scoreLabel = el<HTMLElement>('score-label')
  const textPanel = el<HTMLElement>('text-panel')
  const statusLine = el<HTMLElement>('status')
  const classificationLine = el<HTMLElement>('classification')
  const fpsLine = el<HTMLElement>('fps')
  const poseSelect = el<HTMLSelectElement>('pose-select')
  const endButton = el<HTMLButtonElement>('end-button')
  const summaryPanel = el<HTMLElement>('summary')

  if (!speech.available) {
    statusLine.textContent = 'voice unavailable: visual feedback only'
  }

  let poses: PoseInfo[] = []
  try {
    poses = await fetchPoses(config.server)
  } catch {
    statusLine.textContent = `cannot reach server at ${config.server}`
  }
  for (const pose of poses) {
    const option = document.createElement('option')
    option.value = pose.pose_id
    option.textContent = pose.display_name
    if (pose.pose_id === config.pose) option.selected = true
    poseSelect.appendChild(option)
  }

  const client = new SessionClient(`ws://${config.server}/ws`, store, {
    poseId: config.pose,
  })
  client.connect()
  poseSelect.addEventListener('change', () => client.switchPose(poseSelect.value))
  endButton.addEventListener('click', () => client.end())

  let latestKeypoints: PoseKeypoint[] | null = null
  const fps = new FpsCounter()
  const sessionStart = performance.now()
  let frameId = 0
  let lastSentT = -1

  const onPose = (keypoints: PoseKeypoint[]) => {
    latestKeypoints = keypoints
    // timestamps must be strictly monotonic integers
    let t = Math.round(performance.now() - sessionStart)
    if (t <= lastSentT) t = lastSentT + 1
    if (client.sendFrame(toFrameRecord(keypoints, t, frameId))) {
      lastSentT = t
      frameId += 1
      fps.tick(performance.now())
    }
  }

  let estimator: PoseEstimator
  if (config.demo) {
    estimator = new ScriptedEstimator(demoFrames(640, 480))
    canvas.width = 640
    canvas.height = 480
  } else {
    try {
      const stream = await navigator.mediaDevices.getUserMedia({
        video: { width: 640, height: 480 },
        audio: false,
      })
      video.srcObject = stream
      await video.play()
      canvas.width = video.videoWidth
      canvas.height = video.videoHeight
    } catch {
      statusLine.textContent =
        'camera denied: allow camera access and reload, or add ?demo=1'
      return
    }
    estimator = new MoveNetEstimator()
  }
  await estimator.start(video, onPose)

  const ctx = canvas.getContext('2d')
  if (!ctx) throw new Error('no 2d context')

  const render = () => {
    if (latestKeypoints) {
      drawPose(ctx, latestKeypoints, store.flaggedJoints(), {
        mirror: true,
        width: canvas.width,
        height: canvas.height,
      })
    }
    const evaluation = store.evaluation
    if (evaluation) {
      const pct = Math.round(evaluation.score * 100)
      scoreGauge.style.width = `${pct}%`
      scoreGauge.style.background = pct >= 85 ? '#3ddc84' : pct >= 60 ? '#ffb300' : '#ff3b30'
      scoreLabel.textContent = `${pct}%`
    }
    if (store.textFeedback) {
      textPanel.textContent = store.textFeedback.message
      textPanel.dataset.severity = store.textFeedback.severity
    }
    if (store.classification) {
      const c = store.classification
      classificationLine.textContent =
        `detected: ${c.label} (${Math.round(c.confidence * 100)}%)`
    }
    if (store.summary) {
      const s = store.summary
      summaryPanel.textContent =
        `session: ${s.frames} frames, mean score ` +
        `${s.mean_score === null ? 'n/a' : (s.mean_score * 100).toFixed(1) + '%'}`
    }
    statusLine.textContent =
      store.status === 'connected'
        ? `connected — ${store.started?.display_name ?? ''}`
        : store.status
    fpsLine.textContent = `${fps.fps(performance.now()).toFixed(1)} fps`
    requestAnimationFrame(render)
  }
  requestAnimationFrame(render)
}

main().catch((err) => {
  const status = document.getElementById('status')
  if (status) status.textContent = `failed to start: ${err}`
})
