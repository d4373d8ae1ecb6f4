// Panel wiring: one client, one snapshot, one render pass. Frames and user
// input both funnel into snapshot updates; a scheduled render repaints the
// panel from the latest snapshot and nothing else.
import "./style.css";
import { CommanderClient } from "./client";
import { buildSkeleton, renderPanel } from "./render";
import {
  emptySnapshot,
  Snapshot,
  withConnection,
  withError,
  withRegistry,
  withRequestedSkill,
  withRequestedWeights,
  withState,
} from "./snapshot";
import { Actions, buildControls } from "./widgets";

function endpointFromLocation(): string {
  const q = new URLSearchParams(location.search).get("ws");
  if (q) return q;
  const host = location.hostname || "127.0.0.1";
  return `ws://${host}:8765/ws`;
}

const root = document.getElementById("app")!;
buildSkeleton(root);

let snap: Snapshot = emptySnapshot();
let renderQueued = false;

function update(next: Snapshot): void {
  snap = next;
  if (renderQueued) return;
  renderQueued = true;
  requestAnimationFrame(() => {
    renderQueued = false;
    renderPanel(root, snap);
  });
}

const endpoint = endpointFromLocation();
const endpointEl = root.querySelector("#endpoint");
if (endpointEl) endpointEl.textContent = endpoint;

const client = new CommanderClient(endpoint, {
  onStatus(connected, status) {
    update(withConnection(snap, connected, status));
  },
  onRegistry(reg) {
    update(withRegistry(snap, reg));
    const controlsRoot = root.querySelector<HTMLElement>("#controls");
    if (controlsRoot) buildControls(controlsRoot, reg, actions);
  },
  onFrame(frame) {
    if (frame.type === "state") update(withState(snap, frame));
    else if (frame.type === "error") update(withError(snap, frame));
  },
});

const actions: Actions = {
  commandSkill(factor, values) {
    if (client.sendSkill(factor, values)) {
      update(withRequestedSkill(snap, factor, values));
    }
  },
  commandWeights(values) {
    client.sendWeights(values);
  },
  previewWeights(values) {
    update(withRequestedWeights(snap, values));
  },
  appliedSkill(factor) {
    const z = snap.state?.applied_z[factor];
    return z ? [...z] : null;
  },
  resample: () => void client.resample(),
  reset: () => void client.reset(),
  togglePause() {
    if (snap.state?.paused) client.resume();
    else client.pause();
  },
};

client.connect();
renderPanel(root, snap);
