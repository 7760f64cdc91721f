import { beforeEach, describe, expect, it } from "vitest";

import { SessionClient } from "../src/client.js";
import { ChunkSource, PushToTalkController } from "../src/ptt.js";
import { ClientView } from "../src/view.js";
import { FakeScheduler, FakeSocket, ackFrame, stateFrame } from "./helpers.js";

// A recorder double the test can fire by hand, including after stop().
class ManualSource implements ChunkSource {
  onChunk: ((b64: string) => void) | null = null;
  started = 0;
  stopped = 0;

  start(onChunk: (b64: string) => void): void {
    this.started++;
    this.onChunk = onChunk;
  }

  stop(): void {
    this.stopped++;
  }

  emit(b64: string): void {
    this.onChunk?.(b64);
  }
}

describe("PushToTalkController", () => {
  let socket: FakeSocket;
  let view: ClientView;
  let client: SessionClient;
  let source: ManualSource;
  let ptt: PushToTalkController;

  beforeEach(() => {
    socket = new FakeSocket();
    view = new ClientView(new FakeScheduler());
    client = new SessionClient(socket, view);
    client.start({ role: "physician" });
    socket.open();
    socket.push(ackFrame());
    socket.sent = []; // drop the hello for cleaner assertions
    source = new ManualSource();
    ptt = new PushToTalkController(client, view, source);
  });

  it("sends gate_open on key-down and gate_close on key-up, in order", () => {
    expect(ptt.keyDown("t")).toBe("opened");
    socket.push(stateFrame("listening"));
    source.emit("YWJj");
    source.emit("ZGVm");
    expect(ptt.keyUp("t")).toBe(true);
    expect(socket.sentTypes()).toEqual(["gate_open", "audio_chunk", "audio_chunk", "gate_close"]);
  });

  it("never sends audio_chunk outside the key-hold interval", () => {
    source.onChunk = null;
    // before any hold: the recorder is not even started
    expect(socket.sentTypes()).toEqual([]);
    ptt.keyDown("T");
    source.emit("aW4=");
    ptt.keyUp("T");
    // a straggler callback after release must be dropped
    source.emit("bGF0ZQ==");
    source.emit("bGF0ZTI=");
    const types = socket.sentTypes();
    expect(types).toEqual(["gate_open", "audio_chunk", "gate_close"]);
    const open = types.indexOf("gate_open");
    const close = types.indexOf("gate_close");
    types.forEach((type, index) => {
      if (type === "audio_chunk") {
        expect(index).toBeGreaterThan(open);
        expect(index).toBeLessThan(close);
      }
    });
  });

  it("ignores auto-repeat and double key-downs", () => {
    ptt.keyDown("t");
    expect(ptt.keyDown("t", true)).toBe("held");
    expect(ptt.keyDown("t")).toBe("held");
    ptt.keyUp("t");
    expect(socket.sent.filter((frame) => frame.type === "gate_open")).toHaveLength(1);
  });

  it("is disabled while the patient is speaking and shows the hint", () => {
    socket.push(stateFrame("speaking"));
    expect(ptt.keyDown("t")).toBe("disabled");
    expect(view.notice).toContain("Jane Ryan is speaking");
    expect(socket.sentTypes()).toEqual([]);
    expect(ptt.keyUp("t")).toBe(false); // nothing to release
  });

  it("ignores other keys entirely", () => {
    expect(ptt.keyDown("q")).toBe("ignored");
    expect(ptt.keyUp("q")).toBe(false);
    expect(socket.sentTypes()).toEqual([]);
  });

  it("cancel() closes the gate on focus loss", () => {
    ptt.keyDown("t");
    ptt.cancel();
    expect(socket.sentTypes()).toEqual(["gate_open", "gate_close"]);
    expect(ptt.isHolding).toBe(false);
  });

  it("chunks carry increasing sequence numbers", () => {
    ptt.keyDown("t");
    source.emit("YQ==");
    source.emit("Yg==");
    source.emit("Yw==");
    ptt.keyUp("t");
    const seqs = socket.sent.filter((f) => f.type === "audio_chunk").map((f) => f.payload.seq);
    expect(seqs).toEqual([0, 1, 2]);
  });
});
