// Session client: owns the socket, stamps outgoing frames, feeds incoming
// frames to the view. The socket is an interface so tests drive a fake.

import { makeFrame, parseFrame } from "./protocol.js";
import { ClientView } from "./view.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((event: { data: string }) => void) | null;
  onclose: (() => void) | null;
}

export interface HelloOptions {
  role: string;
  scene_id?: string;
  display_name?: string;
}

export class SessionClient {
  readonly view: ClientView;
  private socket: SocketLike;

  constructor(socket: SocketLike, view?: ClientView) {
    this.socket = socket;
    this.view = view ?? new ClientView();
  }

  start(hello: HelloOptions): void {
    this.view.connection = "connecting";
    this.socket.onopen = () => {
      this.send("hello", { ...hello });
    };
    this.socket.onmessage = (event) => {
      const frame = parseFrame(event.data);
      if (frame) this.view.applyFrame(frame);
    };
    this.socket.onclose = () => {
      this.view.markDisconnected();
    };
  }

  private send(type: string, payload: Record<string, unknown> = {}): void {
    this.socket.send(JSON.stringify(makeFrame(type, payload, this.view.sessionId, this.view.turnId)));
  }

  gateOpen(): void {
    this.send("gate_open");
  }

  gateClose(): void {
    this.send("gate_close");
  }

  audioChunk(b64: string, seq: number): void {
    this.send("audio_chunk", { seq, b64 });
  }

  // The typed path: a whole turn in one frame, no gate messages.
  textInput(text: string): void {
    this.send("text_input", { text });
  }

  switchScene(sceneId: string): void {
    this.send("switch_scene", { scene_id: sceneId });
  }

  ping(): void {
    this.send("ping");
  }

  close(): void {
    this.socket.close();
  }
}
