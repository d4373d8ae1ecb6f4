// Pure vector helpers mirroring the server's projection rules, so the panel
// can show the value that will actually apply before the echo comes back.

/** Euclidean projection onto the probability simplex (sum 1, nonnegative). */
export function projectSimplex(v: number[]): number[] {
  const n = v.length;
  if (n === 0) return [];
  const u = [...v].sort((a, b) => b - a);
  let tau = 0;
  let rho = 0;
  let css = -1;
  for (let j = 0; j < n; j++) {
    css += u[j]!;
    if (u[j]! - css / (j + 1) > 0) {
      rho = j + 1;
      tau = css / rho;
    }
  }
  return v.map((x) => Math.max(x - tau, 0));
}

/** Nonnegative unit-L2 weights; null when the input cannot be normalized. */
export function projectWeights(v: number[]): number[] | null {
  const a = v.map(Math.abs);
  const n = Math.hypot(...a);
  if (!(n > 1e-12) || !Number.isFinite(n)) return null;
  return a.map((x) => x / n);
}

/** Direction scaled to a requested magnitude; zero input pins to axis 0. */
export function directionTimesMagnitude(dir: number[], mag: number): number[] {
  const n = Math.hypot(...dir);
  if (!(n > 1e-12)) {
    const out = dir.map(() => 0);
    if (out.length > 0) out[0] = mag;
    return out;
  }
  return dir.map((x) => (x / n) * mag);
}

/** z' = z @ M for a mirror table from the handshake. */
export function applyMirrorTable(z: number[], table: number[][]): number[] {
  const d = z.length;
  const out = new Array<number>(d).fill(0);
  for (let i = 0; i < d; i++) {
    const row = table[i];
    if (!row || row.length !== d) {
      throw new Error(`mirror table row ${i} is not length ${d}`);
    }
    for (let j = 0; j < d; j++) out[j]! += z[i]! * row[j]!;
  }
  return out;
}

export interface Viewport {
  cx: number;
  cy: number;
  scale: number; // pixels per world unit
}

/** Fit a point trail into a w x h canvas with a margin, keeping aspect. */
export function fitViewport(
  points: ReadonlyArray<readonly [number, number]>,
  w: number,
  h: number,
  margin = 20,
): Viewport {
  if (points.length === 0) return { cx: 0, cy: 0, scale: 40 };
  let xmin = Infinity;
  let xmax = -Infinity;
  let ymin = Infinity;
  let ymax = -Infinity;
  for (const [x, y] of points) {
    xmin = Math.min(xmin, x);
    xmax = Math.max(xmax, x);
    ymin = Math.min(ymin, y);
    ymax = Math.max(ymax, y);
  }
  const span = Math.max(xmax - xmin, ymax - ymin, 0.5);
  const scale = Math.min((w - 2 * margin) / span, (h - 2 * margin) / span);
  return { cx: (xmin + xmax) / 2, cy: (ymin + ymax) / 2, scale };
}

export function worldToCanvas(
  vp: Viewport,
  w: number,
  h: number,
  x: number,
  y: number,
): [number, number] {
  // world y up, canvas y down
  return [w / 2 + (x - vp.cx) * vp.scale, h / 2 - (y - vp.cy) * vp.scale];
}

export const fmt = (x: number, digits = 3): string =>
  (Object.is(x, -0) ? 0 : x).toFixed(digits);
