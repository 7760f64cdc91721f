// Test doubles: a capturing socket and a manually advanced scheduler.

import type { SocketLike } from "../src/client.js";
import type { Frame } from "../src/protocol.js";
import type { Scheduler } from "../src/view.js";

export class FakeSocket implements SocketLike {
  sent: Frame[] = [];
  closed = false;
  onopen: (() => void) | null = null;
  onmessage: ((event: { data: string }) => void) | null = null;
  onclose: (() => void) | null = null;

  send(data: string): void {
    this.sent.push(JSON.parse(data) as Frame);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  // test-side controls
  open(): void {
    this.onopen?.();
  }

  push(frame: Frame): void {
    this.onmessage?.({ data: JSON.stringify(frame) });
  }

  sentTypes(): string[] {
    return this.sent.map((frame) => frame.type);
  }
}

interface Task {
  id: number;
  at: number;
  fn: () => void;
}

export class FakeScheduler implements Scheduler {
  now = 0;
  private tasks: Task[] = [];
  private nextId = 1;

  set(fn: () => void, ms: number): number {
    const id = this.nextId++;
    this.tasks.push({ id, at: this.now + ms, fn });
    return id;
  }

  clear(id: number): void {
    this.tasks = this.tasks.filter((task) => task.id !== id);
  }

  advance(ms: number): void {
    this.now += ms;
    const due = this.tasks.filter((task) => task.at <= this.now).sort((a, b) => a.at - b.at);
    this.tasks = this.tasks.filter((task) => task.at > this.now);
    for (const task of due) task.fn();
  }

  get pending(): number {
    return this.tasks.length;
  }
}

export function serverFrame(type: string, payload: Record<string, unknown>, turnId = 1): Frame {
  return { type, session_id: "s1", turn_id: turnId, payload };
}

export function ackFrame(): Frame {
  return serverFrame(
    "session_ack",
    {
      session_id: "s1",
      scene: {
        scene_id: "ed",
        title: "Emergency Department",
        setting_description: "A curtained ED bay.",
        patient_pose: "lying in the hospital bed",
      },
      persona_name: "Jane Ryan",
    },
    0,
  );
}

export function stateFrame(turnState: string, turnId = 1): Frame {
  return serverFrame("state", { turn_state: turnState, turn_id: turnId, gate_open: turnState === "listening" }, turnId);
}
