// Browser wiring: connect the view model to the DOM and a real WebSocket.

import { SessionClient, SocketLike } from "./client.js";
import { PushToTalkController, ChunkSource } from "./ptt.js";
import { ClientView } from "./view.js";

const EXPRESSION_FACES: Record<string, string> = {
  neutral: "🙂",
  smiling: "😊",
  embarrassed: "😳",
  confused: "😕",
  reluctant: "😬",
  ashamed: "😔",
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

// Microphone capture is optional; without permission the gate still works
// and the typed path is always available.
class MicrophoneSource implements ChunkSource {
  private recorder: MediaRecorder | null = null;

  start(onChunk: (b64: string) => void): void {
    navigator.mediaDevices
      ?.getUserMedia({ audio: true })
      .then((stream) => {
        this.recorder = new MediaRecorder(stream);
        this.recorder.ondataavailable = (event) => {
          if (event.data.size === 0) return;
          event.data.arrayBuffer().then((buf) => {
            let binary = "";
            for (const byte of new Uint8Array(buf)) binary += String.fromCharCode(byte);
            onChunk(btoa(binary));
          });
        };
        this.recorder.start(250);
      })
      .catch(() => {
        // no microphone: voice turns simply finalize empty
      });
  }

  stop(): void {
    this.recorder?.stop();
    this.recorder?.stream.getTracks().forEach((track) => track.stop());
    this.recorder = null;
  }
}

function render(view: ClientView): void {
  el<HTMLDivElement>("status").textContent =
    view.connection === "connected" ? `${view.turnState}` : view.connection;
  el<HTMLDivElement>("scene-title").textContent = view.scene
    ? `${view.scene.title} — ${view.personaName} is ${view.scene.patientPose}`
    : "";
  if (view.scene) {
    // Make sure the active scene is always offered, even if /scenario failed.
    const picker = el<HTMLSelectElement>("scene");
    const known = Array.from(picker.options).map((option) => option.value);
    if (!known.includes(view.scene.sceneId)) {
      const option = document.createElement("option");
      option.value = view.scene.sceneId;
      option.textContent = view.scene.title;
      picker.appendChild(option);
    }
    picker.value = view.scene.sceneId;
  }

  const face = el<HTMLDivElement>("avatar-face");
  face.textContent = EXPRESSION_FACES[view.avatar.expression] ?? EXPRESSION_FACES.neutral;
  face.className = view.avatar.speaking ? "speaking" : "";
  el<HTMLDivElement>("avatar-label").textContent = view.avatar.speaking
    ? `${view.avatar.clipLabel} (${view.avatar.expression})`
    : "idle";

  const panel = el<HTMLDivElement>("transcript");
  panel.replaceChildren(
    ...view.transcript.map((line) => {
      const div = document.createElement("div");
      div.className = line.speaker === "Healthcare Provider" ? "line provider" : "line patient";
      div.textContent = `${line.speaker}${line.role ? ` (${line.role})` : ""}: ${line.text}`;
      return div;
    }),
  );
  panel.scrollTop = panel.scrollHeight;

  const talk = el<HTMLButtonElement>("talk");
  talk.disabled = !view.canTalk;
  talk.textContent = view.gateOpen ? "Listening… release T to send" : "Hold T to talk";
  el<HTMLDivElement>("notice").textContent = view.notice;
}

function main(): void {
  const view = new ClientView();
  let client: SessionClient | null = null;
  let ptt: PushToTalkController | null = null;
  view.onChange(() => render(view));

  el<HTMLButtonElement>("connect").addEventListener("click", () => {
    const role = el<HTMLSelectElement>("role").value;
    const url = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
    const socket = new WebSocket(url) as unknown as SocketLike;
    client = new SessionClient(socket, view);
    ptt = new PushToTalkController(client, view, new MicrophoneSource());
    client.start({ role });

    fetch("/scenario")
      .then((response) => response.json())
      .then((summary: { scenes: Array<{ scene_id: string; title: string }> }) => {
        const picker = el<HTMLSelectElement>("scene");
        picker.replaceChildren(
          ...summary.scenes.map((scene) => {
            const option = document.createElement("option");
            option.value = scene.scene_id;
            option.textContent = scene.title;
            return option;
          }),
        );
      })
      .catch(() => {});
  });

  el<HTMLSelectElement>("scene").addEventListener("change", (event) => {
    client?.switchScene((event.target as HTMLSelectElement).value);
  });

  const textBox = el<HTMLInputElement>("text");
  el<HTMLFormElement>("text-form").addEventListener("submit", (event) => {
    event.preventDefault();
    const text = textBox.value.trim();
    if (text && client) {
      client.textInput(text);
      textBox.value = "";
    }
  });

  document.addEventListener("keydown", (event) => {
    if (document.activeElement === textBox) return;
    ptt?.keyDown(event.key, event.repeat);
  });
  document.addEventListener("keyup", (event) => {
    if (document.activeElement === textBox) return;
    ptt?.keyUp(event.key);
  });
  window.addEventListener("blur", () => ptt?.cancel());
}

main();
