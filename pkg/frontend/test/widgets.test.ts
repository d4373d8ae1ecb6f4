// @vitest-environment jsdom
// Widget emissions: whatever the sliders do, every outgoing command must be
// schema-valid, simplex requests must sum to 1, and the all-zero weight
// vector must never leave the panel.
import { beforeEach, describe, expect, it } from "vitest";
import fixture from "../../docs/protocol_fixtures.json";
import { clientFrameSchema, RegistryFrame, registryFrameSchema } from "../src/protocol";
import { Actions, buildControls, ControlsHandle } from "../src/widgets";

const registry: RegistryFrame = registryFrameSchema.parse(
  fixture.server_to_client.valid[0]!.frame,
);

interface Sent {
  skills: Array<{ factor: string; values: number[] }>;
  weights: number[][];
  previews: Array<number[] | null>;
  resamples: number;
  resets: number;
  pauses: number;
}

function setup(applied: Record<string, number[]> = {}): {
  root: HTMLElement;
  sent: Sent;
  handle: ControlsHandle;
} {
  const sent: Sent = {
    skills: [],
    weights: [],
    previews: [],
    resamples: 0,
    resets: 0,
    pauses: 0,
  };
  const actions: Actions = {
    commandSkill: (factor, values) => sent.skills.push({ factor, values }),
    commandWeights: (values) => sent.weights.push(values),
    previewWeights: (values) => sent.previews.push(values),
    appliedSkill: (factor) => applied[factor] ?? null,
    resample: () => void (sent.resamples += 1),
    reset: () => void (sent.resets += 1),
    togglePause: () => void (sent.pauses += 1),
  };
  const root = document.createElement("div");
  document.body.append(root);
  const handle = buildControls(root, registry, actions);
  return { root, sent, handle };
}

function drag(input: HTMLInputElement, value: number): void {
  input.value = String(value);
  input.dispatchEvent(new Event("input"));
}

function mulberry(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

beforeEach(() => {
  document.body.innerHTML = "";
});

describe("factor widgets", () => {
  it("builds one block per factor plus the weights block", () => {
    const { root } = setup();
    expect(root.querySelector("#factor-position")).not.toBeNull();
    expect(root.querySelector("#factor-heading_rate")).not.toBeNull();
    expect(root.querySelector("#weights")).not.toBeNull();
    // metra gets direction+magnitude sliders, diayn gets one per component
    expect(
      root.querySelectorAll("#factor-position input[type=range]").length,
    ).toBe(3);
    expect(
      root.querySelectorAll("#factor-heading_rate input[type=range]").length,
    ).toBe(4);
  });

  it("simplex emissions sum to one under slider fuzz", () => {
    const { root, sent } = setup();
    const sliders = [...root.querySelectorAll<HTMLInputElement>(
      "#factor-heading_rate input[type=range]",
    )];
    const rnd = mulberry(3);
    for (let trial = 0; trial < 120; trial++) {
      drag(sliders[Math.floor(rnd() * 4)]!, Math.round(rnd() * 100) / 100);
    }
    expect(sent.skills.length).toBe(120);
    for (const { factor, values } of sent.skills) {
      expect(factor).toBe("heading_rate");
      const parsed = clientFrameSchema.safeParse({
        type: "set_skill",
        factor,
        values,
      });
      expect(parsed.success).toBe(true);
      expect(Math.min(...values)).toBeGreaterThanOrEqual(0);
      expect(Math.abs(values.reduce((s, x) => s + x, 0) - 1)).toBeLessThan(1e-9);
    }
  });

  it("direction widget emissions are finite and schema-valid", () => {
    const { root, sent } = setup();
    const sliders = [...root.querySelectorAll<HTMLInputElement>(
      "#factor-position input[type=range]",
    )];
    const rnd = mulberry(5);
    for (let trial = 0; trial < 120; trial++) {
      const s = sliders[Math.floor(rnd() * sliders.length)]!;
      const lo = Number(s.min);
      const hi = Number(s.max);
      drag(s, lo + Math.round(rnd() * 100 * (hi - lo)) / 100);
    }
    for (const { values } of sent.skills) {
      expect(values.length).toBe(2);
      expect(values.every(Number.isFinite)).toBe(true);
      expect(
        clientFrameSchema.safeParse({
          type: "set_skill",
          factor: "position",
          values,
        }).success,
      ).toBe(true);
    }
    // zeroing the direction must still give a usable request
    drag(sliders[0]!, 0);
    drag(sliders[1]!, 0);
    const last = sent.skills[sent.skills.length - 1]!.values;
    expect(Math.hypot(...last)).toBeGreaterThan(0);
  });
});

describe("weight sliders", () => {
  it("previews the post-normalization vector and sends it", () => {
    const { root, sent } = setup();
    const sliders = [...root.querySelectorAll<HTMLInputElement>(
      "#weights input[type=range]",
    )];
    expect(sliders.length).toBe(3);
    drag(sliders[2]!, 0);
    drag(sliders[0]!, 0.6);
    const lam = sent.weights[sent.weights.length - 1]!;
    expect(Math.abs(Math.hypot(...lam) - 1)).toBeLessThan(1e-9);
    expect(
      clientFrameSchema.safeParse({ type: "set_weights", values: lam }).success,
    ).toBe(true);
    // preview saw the same vector
    const preview = sent.previews[sent.previews.length - 1]!;
    expect(preview).toEqual(lam);
  });

  it("never emits the all-zero vector", () => {
    const { root, sent } = setup();
    const sliders = [...root.querySelectorAll<HTMLInputElement>(
      "#weights input[type=range]",
    )];
    for (const s of sliders) drag(s, 0);
    expect(sent.weights.length).toBe(2); // the first two drags still normalize
    const warning = root.querySelector(".weights-warning")!;
    expect(warning.textContent).toMatch(/cannot apply/);
    expect(sent.previews[sent.previews.length - 1]).toBeNull();
    // recovery: any nonzero slider resumes sending
    drag(sliders[1]!, 0.4);
    expect(sent.weights.length).toBe(3);
    expect(sent.weights[2]).toEqual([0, 1, 0]);
  });
});

describe("mirror buttons", () => {
  it("k=2 mirrors the applied skill and sends the result", () => {
    const { root, sent } = setup({
      heading_rate: [0.6, 0.2, 0.15, 0.05],
      position: [0.6, -0.8],
    });
    const btn = [...root.querySelectorAll<HTMLButtonElement>(
      "#factor-heading_rate button.mirror",
    )].find((b) => b.textContent!.includes("k=2"))!;
    btn.click();
    const { factor, values } = sent.skills[sent.skills.length - 1]!;
    expect(factor).toBe("heading_rate");
    // latin4 k=2 swaps block (0,1) with (2,3)
    expect(values).toEqual([0.15, 0.05, 0.6, 0.2]);

    const posBtn = [...root.querySelectorAll<HTMLButtonElement>(
      "#factor-position button.mirror",
    )].find((b) => b.textContent!.includes("k=2"))!;
    posBtn.click();
    const pos = sent.skills[sent.skills.length - 1]!;
    expect(pos.factor).toBe("position");
    expect(pos.values[0]).toBeCloseTo(0.6, 12);
    expect(pos.values[1]).toBeCloseTo(0.8, 12);
  });

  it("falls back to the widget request when nothing is applied yet", () => {
    const { root, sent } = setup();
    const btn = [...root.querySelectorAll<HTMLButtonElement>(
      "#factor-heading_rate button.mirror",
    )].find((b) => b.textContent!.includes("k=2"))!;
    btn.click();
    const { values } = sent.skills[sent.skills.length - 1]!;
    expect(Math.abs(values.reduce((s, x) => s + x, 0) - 1)).toBeLessThan(1e-9);
  });
});

describe("session buttons", () => {
  it("wires resample, reset and pause", () => {
    const { root, sent } = setup();
    root.querySelector<HTMLButtonElement>("#btn-resample")!.click();
    root.querySelector<HTMLButtonElement>("#btn-reset")!.click();
    root.querySelector<HTMLButtonElement>("#btn-pause")!.click();
    expect([sent.resamples, sent.resets, sent.pauses]).toEqual([1, 1, 1]);
  });

  it("setEnabled(false) disables every control", () => {
    const { root, handle } = setup();
    handle.setEnabled(false);
    const all = [...root.querySelectorAll<HTMLInputElement | HTMLButtonElement>(
      "input,button",
    )];
    expect(all.length).toBeGreaterThan(0);
    expect(all.every((n) => n.disabled)).toBe(true);
  });
});
