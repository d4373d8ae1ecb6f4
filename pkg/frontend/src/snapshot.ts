// Latest-state snapshot: the single source the render pass reads from.
// Updates build a fresh object, so rendering stays a pure function of the
// snapshot and repeated renders of one snapshot produce identical DOM.
import type { ErrorFrame, RegistryFrame, StateFrame } from "./protocol";

export const TRAIL_MAX = 600; // 60 s of positions at 10 Hz
export const SPARK_MAX = 120; // 12 s of scores per factor

export interface Snapshot {
  connected: boolean;
  status: string;
  registry: RegistryFrame | null;
  state: StateFrame | null;
  trail: ReadonlyArray<readonly [number, number]>;
  scoreHistory: Readonly<Record<string, ReadonlyArray<number>>>;
  requestedZ: Readonly<Record<string, ReadonlyArray<number>>>;
  requestedWeights: ReadonlyArray<number> | null;
  lastError: ErrorFrame | null;
}

export function emptySnapshot(): Snapshot {
  return {
    connected: false,
    status: "disconnected",
    registry: null,
    state: null,
    trail: [],
    scoreHistory: {},
    requestedZ: {},
    requestedWeights: null,
    lastError: null,
  };
}

export function withConnection(
  snap: Snapshot,
  connected: boolean,
  status: string,
): Snapshot {
  return { ...snap, connected, status };
}

export function withRegistry(snap: Snapshot, reg: RegistryFrame): Snapshot {
  // new session: the old trail and score history describe a stale agent
  return {
    ...snap,
    registry: reg,
    state: null,
    trail: [],
    scoreHistory: {},
    lastError: null,
  };
}

export function withState(snap: Snapshot, frame: StateFrame): Snapshot {
  const px = frame.state[0]!;
  const py = frame.state[1]!;
  const trail = [...snap.trail, [px, py] as const].slice(-TRAIL_MAX);
  const scoreHistory: Record<string, number[]> = {};
  for (const [name, value] of Object.entries(frame.scores)) {
    scoreHistory[name] = [...(snap.scoreHistory[name] ?? []), value].slice(
      -SPARK_MAX,
    );
  }
  return { ...snap, state: frame, trail, scoreHistory };
}

export function withError(snap: Snapshot, err: ErrorFrame): Snapshot {
  return { ...snap, lastError: err };
}

export function withRequestedSkill(
  snap: Snapshot,
  factor: string,
  values: ReadonlyArray<number>,
): Snapshot {
  return {
    ...snap,
    requestedZ: { ...snap.requestedZ, [factor]: [...values] },
  };
}

export function withRequestedWeights(
  snap: Snapshot,
  values: ReadonlyArray<number> | null,
): Snapshot {
  return { ...snap, requestedWeights: values ? [...values] : null };
}
