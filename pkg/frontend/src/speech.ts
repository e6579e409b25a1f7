// Voice channel: speaks server text through the platform speech facility.
// Utterances never overlap; while one is speaking, the queue holds at most
// one pending message and a newer one replaces it (stale corrections are
// worse than silence).

export interface SpeechAdapter {
  speak(text: string, onDone: () => void): void
  cancel(): void
}

export class WebSpeechAdapter implements SpeechAdapter {
  private readonly synth: SpeechSynthesis

  constructor(synth: SpeechSynthesis) {
    this.synth = synth
  }

  speak(text: string, onDone: () => void): void {
    const utterance = new SpeechSynthesisUtterance(text)
    utterance.lang = 'en-US'
    utterance.rate = 1.05
    utterance.onend = onDone
    utterance.onerror = onDone
    this.synth.speak(utterance)
  }

  cancel(): void {
    this.synth.cancel()
  }
}

export function platformSpeechAdapter(): SpeechAdapter | null {
  if (typeof window !== 'undefined' && 'speechSynthesis' in window) {
    return new WebSpeechAdapter(window.speechSynthesis)
  }
  return null
}

export class SpeechQueue {
  private readonly adapter: SpeechAdapter | null
  private speaking = false
  private pending: string | null = null
  spokenCount = 0

  constructor(adapter: SpeechAdapter | null) {
    this.adapter = adapter
  }

  get available(): boolean {
    return this.adapter !== null
  }

  say(text: string): void {
    if (!this.adapter || !text) return
    if (this.speaking) {
      this.pending = text // newest wins
      return
    }
    this.speaking = true
    this.spokenCount += 1
    this.adapter.speak(text, () => {
      this.speaking = false
      const next = this.pending
      this.pending = null
      if (next) this.say(next)
    })
  }

  stop(): void {
    this.pending = null
    this.adapter?.cancel()
    this.speaking = false
  }
}
