// Snapshot-driven rendering. `renderPanel` is a pure function of the
// snapshot: it reads nothing else, never mutates it, and writes the same DOM
// for the same snapshot, so the view can be redrawn from scratch at any time.
import { fitViewport, fmt, worldToCanvas } from "./geometry";
import type { Snapshot } from "./snapshot";
import { setVectorRow } from "./widgets";

export function buildSkeleton(root: HTMLElement): void {
  root.innerHTML = `
    <header>
      <h1>skill commander</h1>
      <span id="status" class="status disconnected">disconnected</span>
      <span id="endpoint" class="endpoint"></span>
    </header>
    <div class="layout">
      <div id="controls" class="controls-disabled"></div>
      <div class="views">
        <div class="traj-wrap">
          <canvas id="traj" width="420" height="420"></canvas>
          <div id="pose-readout" class="pose-readout"></div>
        </div>
        <div class="gauges">
          <div class="gauge" id="gauge-height">
            <span class="gauge-label">height</span>
            <div class="bar"><div class="fill"></div></div>
            <span class="gauge-value"></span>
          </div>
          <div class="gauge" id="gauge-tilt">
            <span class="gauge-label">tilt</span>
            <div class="tilt-pad"><div class="dot"></div></div>
            <span class="gauge-value"></span>
          </div>
        </div>
        <table id="telemetry">
          <tbody></tbody>
        </table>
        <div id="last-error" class="last-error"></div>
      </div>
    </div>`;
}

function heading(state: ReadonlyArray<number>): number {
  return Math.atan2(state[3]!, state[2]!);
}

function drawTrajectory(canvas: HTMLCanvasElement, snap: Snapshot): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return; // test DOM without a raster backend
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#10141c";
  ctx.fillRect(0, 0, w, h);
  const st = snap.state;
  const pts: Array<readonly [number, number]> = [...snap.trail];
  if (st) pts.push([st.state[0]!, st.state[1]!]);
  const vp = fitViewport(pts, w, h);

  // world grid every 1 unit
  ctx.strokeStyle = "rgba(255,255,255,0.07)";
  ctx.lineWidth = 1;
  const span = Math.max(w, h) / vp.scale;
  const x0 = Math.floor(vp.cx - span);
  const y0 = Math.floor(vp.cy - span);
  for (let gx = x0; gx <= vp.cx + span; gx++) {
    const [cx1, cy1] = worldToCanvas(vp, w, h, gx, vp.cy - span);
    const [cx2, cy2] = worldToCanvas(vp, w, h, gx, vp.cy + span);
    ctx.beginPath();
    ctx.moveTo(cx1, cy1);
    ctx.lineTo(cx2, cy2);
    ctx.stroke();
  }
  for (let gy = y0; gy <= vp.cy + span; gy++) {
    const [cx1, cy1] = worldToCanvas(vp, w, h, vp.cx - span, gy);
    const [cx2, cy2] = worldToCanvas(vp, w, h, vp.cx + span, gy);
    ctx.beginPath();
    ctx.moveTo(cx1, cy1);
    ctx.lineTo(cx2, cy2);
    ctx.stroke();
  }

  if (snap.trail.length > 1) {
    ctx.strokeStyle = "#4a9eff";
    ctx.lineWidth = 2;
    ctx.beginPath();
    snap.trail.forEach(([x, y], i) => {
      const [cx, cy] = worldToCanvas(vp, w, h, x, y);
      if (i === 0) ctx.moveTo(cx, cy);
      else ctx.lineTo(cx, cy);
    });
    ctx.stroke();
  }

  if (st) {
    const [cx, cy] = worldToCanvas(vp, w, h, st.state[0]!, st.state[1]!);
    const th = heading(st.state);
    const len = 18;
    ctx.strokeStyle = "#ffd166";
    ctx.lineWidth = 3;
    ctx.beginPath();
    ctx.moveTo(cx, cy);
    ctx.lineTo(cx + len * Math.cos(th), cy - len * Math.sin(th));
    ctx.stroke();
    ctx.fillStyle = snap.state?.paused ? "#888" : "#ff6b35";
    ctx.beginPath();
    ctx.arc(cx, cy, 6, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function drawSparkline(canvas: HTMLCanvasElement, values: ReadonlyArray<number>): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#10141c";
  ctx.fillRect(0, 0, w, h);
  // score range is [-1, 1]; zero line for orientation
  ctx.strokeStyle = "rgba(255,255,255,0.2)";
  ctx.beginPath();
  ctx.moveTo(0, h / 2);
  ctx.lineTo(w, h / 2);
  ctx.stroke();
  if (values.length < 2) return;
  ctx.strokeStyle = "#7bd88f";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  values.forEach((v, i) => {
    const x = (i / (values.length - 1)) * w;
    const y = h / 2 - (Math.max(-1, Math.min(1, v)) * h) / 2;
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
}

function renderTelemetry(tbody: Element, snap: Snapshot): void {
  const st = snap.state;
  const rows: Array<[string, string]> = [];
  if (st) {
    rows.push(
      ["t", `${fmt(st.t, 2)} s`],
      ["step", String(st.step)],
      ["paused", st.paused ? "yes" : "no"],
    );
    for (const [name, v] of Object.entries(st.scores)) {
      rows.push([`score ${name}`, fmt(v)]);
    }
    for (const [name, v] of Object.entries(st.rewards)) {
      rows.push([`reward ${name}`, fmt(v)]);
    }
  }
  tbody.innerHTML = rows
    .map(([k, v]) => `<tr><td>${k}</td><td>${v}</td></tr>`)
    .join("");
}

export function renderPanel(root: HTMLElement, snap: Snapshot): void {
  const status = root.querySelector("#status");
  if (status) {
    status.textContent = snap.status;
    status.className = `status ${snap.connected ? "connected" : "disconnected"}`;
  }

  const controls = root.querySelector<HTMLElement>("#controls");
  if (controls) {
    controls.classList.toggle("controls-disabled", !snap.connected);
    controls
      .querySelectorAll<HTMLInputElement | HTMLButtonElement>("input,button")
      .forEach((n) => (n.disabled = !snap.connected));
    const pauseBtn = controls.querySelector<HTMLButtonElement>("#btn-pause");
    if (pauseBtn) pauseBtn.textContent = snap.state?.paused ? "resume" : "pause";

    for (const f of snap.registry?.factors ?? []) {
      const block = controls.querySelector(`#factor-${f.name}`);
      if (!block) continue;
      setVectorRow(
        block.querySelector(".vector-row.requested"),
        snap.requestedZ[f.name] ? [...snap.requestedZ[f.name]!] : null,
      );
      setVectorRow(
        block.querySelector(".vector-row.applied"),
        snap.state ? [...(snap.state.applied_z[f.name] ?? [])] : null,
      );
      const spark = block.querySelector<HTMLCanvasElement>("canvas.sparkline");
      if (spark) drawSparkline(spark, snap.scoreHistory[f.name] ?? []);
    }
    setVectorRow(
      controls.querySelector(".vector-row.lam-preview"),
      snap.requestedWeights ? [...snap.requestedWeights] : null,
    );
    setVectorRow(
      controls.querySelector(".vector-row.lam-applied"),
      snap.state ? [...snap.state.applied_lam] : null,
    );
  }

  const traj = root.querySelector<HTMLCanvasElement>("#traj");
  if (traj) drawTrajectory(traj, snap);

  const pose = root.querySelector("#pose-readout");
  if (pose) {
    const st = snap.state;
    pose.textContent = st
      ? `x ${fmt(st.state[0]!, 2)}  y ${fmt(st.state[1]!, 2)}  ` +
        `θ ${fmt(heading(st.state), 2)}  ` +
        `v (${fmt(st.state[4]!, 2)}, ${fmt(st.state[5]!, 2)})  ` +
        `ω ${fmt(st.state[6]!, 2)}`
      : "no state yet";
  }

  const hGauge = root.querySelector("#gauge-height");
  if (hGauge) {
    const hVal = snap.state?.state[7] ?? null;
    const fill = hGauge.querySelector<HTMLElement>(".fill");
    // desk agent height ranges over [0, 1]; clamp for the bar
    if (fill)
      fill.style.height = `${Math.round(Math.max(0, Math.min(1, hVal ?? 0)) * 100)}%`;
    const val = hGauge.querySelector(".gauge-value");
    if (val) val.textContent = hVal === null ? "—" : fmt(hVal, 2);
  }

  const tGauge = root.querySelector("#gauge-tilt");
  if (tGauge) {
    const roll = snap.state?.state[8] ?? 0;
    const pitch = snap.state?.state[9] ?? 0;
    const dot = tGauge.querySelector<HTMLElement>(".dot");
    if (dot) {
      // pad is 80x80 px; full deflection at |angle| = 0.6 rad
      dot.style.left = `${40 + Math.max(-1, Math.min(1, roll / 0.6)) * 36}px`;
      dot.style.top = `${40 + Math.max(-1, Math.min(1, pitch / 0.6)) * 36}px`;
    }
    const val = tGauge.querySelector(".gauge-value");
    if (val)
      val.textContent = snap.state
        ? `r ${fmt(roll, 2)} p ${fmt(pitch, 2)}`
        : "—";
  }

  const tbody = root.querySelector("#telemetry tbody");
  if (tbody) renderTelemetry(tbody, snap);

  const err = root.querySelector("#last-error");
  if (err) {
    err.textContent = snap.lastError
      ? `server error ${snap.lastError.code}: ${snap.lastError.detail}`
      : "";
  }
}
