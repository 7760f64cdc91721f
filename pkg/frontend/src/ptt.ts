// Push-to-talk: hold T to speak. gate_open goes out on key-down, gate_close
// on key-up, and audio chunks are forwarded only while the key is held —
// a chunk arriving from the recorder after release is dropped on the floor.

import { SessionClient } from "./client.js";
import { ClientView } from "./view.js";

export const TALK_KEY = "t";

// Optional microphone adapter; the text path works without one.
export interface ChunkSource {
  start(onChunk: (b64: string) => void): void;
  stop(): void;
}

export type KeyDownResult = "opened" | "held" | "disabled" | "ignored";

export class PushToTalkController {
  private holding = false;
  private seq = 0;

  constructor(
    private client: SessionClient,
    private view: ClientView,
    private source?: ChunkSource,
  ) {}

  get isHolding(): boolean {
    return this.holding;
  }

  keyDown(key: string, repeat = false): KeyDownResult {
    if (key.toLowerCase() !== TALK_KEY) return "ignored";
    if (repeat) return "held";
    if (this.holding) return "held";
    if (!this.view.canTalk) {
      if (this.view.patientBusy) {
        this.view.notice = `${this.view.personaName || "The patient"} is speaking — the talk key is disabled.`;
      }
      return "disabled";
    }
    this.holding = true;
    this.seq = 0;
    this.client.gateOpen();
    this.source?.start((b64) => {
      // Late recorder callbacks after release must never become frames.
      if (this.holding) this.client.audioChunk(b64, this.seq++);
    });
    return "opened";
  }

  keyUp(key: string): boolean {
    if (key.toLowerCase() !== TALK_KEY || !this.holding) return false;
    this.holding = false;
    this.source?.stop();
    this.client.gateClose();
    return true;
  }

  // Safety net for focus loss mid-hold (alt-tab, dialog, etc.).
  cancel(): void {
    if (this.holding) this.keyUp(TALK_KEY);
  }
}
