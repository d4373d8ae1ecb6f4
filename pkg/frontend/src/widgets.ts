// Control widgets, built once from the handshake registry. Every commanding
// path funnels through `Actions`, and every vector leaving a widget is
// already projected client side (simplex / direction*magnitude / weight
// normalization), mirroring the server rules so previews match what applies.
import {
  applyMirrorTable,
  directionTimesMagnitude,
  fmt,
  projectSimplex,
  projectWeights,
} from "./geometry";
import type { FactorInfo, RegistryFrame } from "./protocol";

export interface Actions {
  commandSkill(factor: string, values: number[]): void;
  commandWeights(values: number[]): void;
  previewWeights(values: number[] | null): void;
  appliedSkill(factor: string): number[] | null;
  resample(): void;
  reset(): void;
  togglePause(): void;
}

export interface FactorWidget {
  readonly factor: FactorInfo;
  /** Current request implied by the widget's sliders. */
  requested(): number[];
  /** Move the sliders to represent `z` (used by the mirror buttons). */
  setValues(z: number[]): void;
}

export interface ControlsHandle {
  setEnabled(enabled: boolean): void;
  widgets: Map<string, FactorWidget>;
  weightSliders: HTMLInputElement[];
}

const MIRROR_LABELS: Record<string, string> = {
  "2": "mirror k=2 (left-right)",
  "3": "k=3 (front-back)",
  "4": "k=4 (turn 180°)",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function slider(
  id: string,
  min: number,
  max: number,
  value: number,
  oninput: () => void,
): HTMLInputElement {
  const s = el("input");
  s.type = "range";
  s.id = id;
  s.min = String(min);
  s.max = String(max);
  s.step = "0.01";
  s.value = String(value);
  s.addEventListener("input", oninput);
  return s;
}

function sliderRow(
  label: string,
  s: HTMLInputElement,
  valueSpan: HTMLSpanElement,
): HTMLDivElement {
  const row = el("div", "slider-row");
  const lab = el("label", "", label);
  lab.htmlFor = s.id;
  row.append(lab, s, valueSpan);
  return row;
}

function vectorRow(cls: string, label: string): HTMLDivElement {
  const row = el("div", `vector-row ${cls}`);
  row.append(el("span", "vector-label", label), el("span", "vector-values", "—"));
  return row;
}

export function setVectorRow(row: Element | null, values: number[] | null): void {
  const span = row?.querySelector(".vector-values");
  if (span) span.textContent = values ? values.map((v) => fmt(v)).join("  ") : "—";
}

function mirrorButtons(
  f: FactorInfo,
  widget: FactorWidget,
  actions: Actions,
): HTMLDivElement {
  const wrap = el("div", "mirror-buttons");
  for (const k of ["2", "3", "4"]) {
    const table = f.mirror_tables[k];
    if (!table) continue;
    const btn = el("button", k === "2" ? "mirror primary" : "mirror", MIRROR_LABELS[k]);
    btn.type = "button";
    btn.addEventListener("click", () => {
      // mirror what the agent is actually doing; fall back to the request
      const z = actions.appliedSkill(f.name) ?? widget.requested();
      const mirrored = applyMirrorTable(z, table);
      widget.setValues(mirrored);
      actions.commandSkill(f.name, mirrored);
    });
    wrap.append(btn);
  }
  return wrap;
}

/** DIAYN factor: one slider per component, projected onto the simplex so
 * the displayed and sent values always sum to 1. */
function simplexWidget(
  f: FactorInfo,
  actions: Actions,
  fieldset: HTMLFieldSetElement,
): FactorWidget {
  const sliders: HTMLInputElement[] = [];
  const previews: HTMLSpanElement[] = [];
  let raw = new Array<number>(f.dim).fill(1 / f.dim);

  const projected = () => projectSimplex(raw);
  const refresh = () => {
    const p = projected();
    previews.forEach((span, i) => (span.textContent = fmt(p[i]!)));
  };
  const push = () => {
    refresh();
    actions.commandSkill(f.name, projected());
  };

  const grid = el("div", "slider-grid");
  for (let i = 0; i < f.dim; i++) {
    const span = el("span", "slider-value");
    const s = slider(`skill-${f.name}-${i}`, 0, 1, raw[i]!, () => {
      raw = sliders.map((x) => Number(x.value));
      push();
    });
    sliders.push(s);
    previews.push(span);
    grid.append(sliderRow(`z[${i}]`, s, span));
  }
  fieldset.append(grid);
  refresh();

  return {
    factor: f,
    requested: projected,
    setValues(z: number[]) {
      raw = projectSimplex(z);
      sliders.forEach((s, i) => (s.value = String(raw[i]!)));
      refresh();
    },
  };
}

/** METRA factor: per-axis direction sliders plus a magnitude slider; the
 * request is the unit direction scaled by the magnitude. */
function directionWidget(
  f: FactorInfo,
  actions: Actions,
  fieldset: HTMLFieldSetElement,
): FactorWidget {
  const dirSliders: HTMLInputElement[] = [];
  const magSpan = el("span", "slider-value");
  const previewRow = vectorRow("requested", "requested");

  const current = () =>
    directionTimesMagnitude(
      dirSliders.map((s) => Number(s.value)),
      Number(mag.value),
    );
  const refresh = () => {
    magSpan.textContent = fmt(Number(mag.value), 2);
    setVectorRow(previewRow, current());
  };
  const push = () => {
    refresh();
    actions.commandSkill(f.name, current());
  };

  const grid = el("div", "slider-grid");
  for (let i = 0; i < f.dim; i++) {
    const s = slider(`skill-${f.name}-${i}`, -1, 1, i === 0 ? 1 : 0, push);
    dirSliders.push(s);
    grid.append(sliderRow(`dir[${i}]`, s, el("span", "slider-value")));
  }
  const mag = slider(`skill-${f.name}-mag`, 0, 2, 1, push);
  grid.append(sliderRow("magnitude", mag, magSpan));
  fieldset.append(grid, previewRow);
  refresh();

  return {
    factor: f,
    requested: current,
    setValues(z: number[]) {
      const n = Math.hypot(...z);
      const dir = n > 1e-12 ? z.map((x) => x / n) : z.map((_, i) => (i === 0 ? 1 : 0));
      dirSliders.forEach((s, i) => (s.value = String(dir[i]!)));
      mag.value = String(n > 1e-12 ? n : 1);
      refresh();
    },
  };
}

function factorBlock(
  f: FactorInfo,
  actions: Actions,
): { fieldset: HTMLFieldSetElement; widget: FactorWidget } {
  const fieldset = el("fieldset", "factor-block");
  fieldset.id = `factor-${f.name}`;
  const legend = el("legend");
  legend.append(
    el("span", "factor-name", f.name),
    el("span", `algo-badge algo-${f.algorithm}`, f.algorithm),
    el("span", "factor-meta", `dim ${f.dim} · state ${JSON.stringify(f.state_slice)} · ${f.mirror}`),
  );
  fieldset.append(legend);

  const widget =
    f.algorithm === "diayn"
      ? simplexWidget(f, actions, fieldset)
      : directionWidget(f, actions, fieldset);
  if (f.algorithm === "diayn") {
    fieldset.append(vectorRow("requested", "requested"));
  }
  fieldset.append(
    vectorRow("applied", "applied"),
    mirrorButtons(f, widget, actions),
    el("canvas", "sparkline"),
  );
  const spark = fieldset.querySelector("canvas") as HTMLCanvasElement;
  spark.width = 220;
  spark.height = 36;
  spark.dataset.factor = f.name;
  return { fieldset, widget };
}

function weightsBlock(
  reg: RegistryFrame,
  actions: Actions,
): { fieldset: HTMLFieldSetElement; sliders: HTMLInputElement[] } {
  const fieldset = el("fieldset", "weights-block");
  fieldset.id = "weights";
  const legend = el("legend");
  legend.append(
    el("span", "factor-name", "factor weights λ"),
    el("span", "factor-meta", "unit L2, style last"),
  );
  fieldset.append(legend);

  const names = [...reg.factors.map((f) => f.name), "style"];
  const sliders: HTMLInputElement[] = [];
  const warn = el("div", "weights-warning", "");

  const push = () => {
    const raw = sliders.map((s) => Number(s.value));
    const lam = projectWeights(raw);
    actions.previewWeights(lam);
    if (!lam) {
      // an all-zero vector cannot be normalized; hold the sliders, send nothing
      warn.textContent = "all-zero weights cannot apply; previous λ kept";
      return;
    }
    warn.textContent = "";
    actions.commandWeights(lam);
  };

  const grid = el("div", "slider-grid");
  names.forEach((name, i) => {
    const s = slider(`weight-${i}`, 0, 1, 1, push);
    sliders.push(s);
    grid.append(sliderRow(name, s, el("span", "slider-value")));
  });
  fieldset.append(
    grid,
    vectorRow("lam-preview", "will apply"),
    vectorRow("lam-applied", "applied"),
    warn,
  );
  return { fieldset, sliders };
}

export function buildControls(
  root: HTMLElement,
  reg: RegistryFrame,
  actions: Actions,
): ControlsHandle {
  root.textContent = "";
  const widgets = new Map<string, FactorWidget>();

  const session = el("div", "session-buttons");
  const mk = (label: string, fn: () => void, id: string) => {
    const b = el("button", "session", label);
    b.type = "button";
    b.id = id;
    b.addEventListener("click", fn);
    session.append(b);
    return b;
  };
  mk("resample", () => actions.resample(), "btn-resample");
  mk("reset", () => actions.reset(), "btn-reset");
  // the label follows the server's paused flag through the render pass
  mk("pause", () => actions.togglePause(), "btn-pause");
  root.append(session);

  for (const f of reg.factors) {
    const { fieldset, widget } = factorBlock(f, actions);
    widgets.set(f.name, widget);
    root.append(fieldset);
  }
  const { fieldset, sliders } = weightsBlock(reg, actions);
  root.append(fieldset);

  return {
    widgets,
    weightSliders: sliders,
    setEnabled(enabled: boolean) {
      root
        .querySelectorAll<HTMLInputElement | HTMLButtonElement>("input,button")
        .forEach((n) => (n.disabled = !enabled));
      root.classList.toggle("controls-disabled", !enabled);
    },
  };
}
