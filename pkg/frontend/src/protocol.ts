// Wire protocol schemas for the session service (see ../../docs/protocol.md).
// Every frame is one JSON object with a string `type`. Outbound frames are
// validated before they are sent; inbound frames are validated before they
// touch any UI state, so a misbehaving server cannot corrupt the panel.
import { z } from "zod";

const finite = z.number().finite();

// ---------------------------------------------------------- client to server

export const helloFactorSchema = z
  .object({
    name: z.string().min(1),
    dim: z.number().int().positive().optional(),
    algorithm: z.enum(["diayn", "metra"]).optional(),
    mirror: z.string().optional(),
    state_slice: z.array(z.number().int().nonnegative()).optional(),
  })
  .strict();

export const helloSchema = z
  .object({
    type: z.literal("hello"),
    registry: z
      .object({ factors: z.array(helloFactorSchema) })
      .strict()
      .optional(),
  })
  .strict();

export const setSkillSchema = z
  .object({
    type: z.literal("set_skill"),
    factor: z.string().min(1),
    values: z.array(finite).min(1),
  })
  .strict();

export const setWeightsSchema = z
  .object({
    type: z.literal("set_weights"),
    values: z.array(finite).min(2),
  })
  .strict();

const bare = (name: string) => z.object({ type: z.literal(name) }).strict();

export const resampleSchema = bare("resample");
export const resetSchema = bare("reset");
export const pauseSchema = bare("pause");
export const resumeSchema = bare("resume");

export const clientFrameSchema = z.discriminatedUnion("type", [
  helloSchema,
  setSkillSchema,
  setWeightsSchema,
  resampleSchema,
  resetSchema,
  pauseSchema,
  resumeSchema,
]);

export type HelloFrame = z.infer<typeof helloSchema>;
export type SetSkillFrame = z.infer<typeof setSkillSchema>;
export type SetWeightsFrame = z.infer<typeof setWeightsSchema>;
export type ClientFrame = z.infer<typeof clientFrameSchema>;

// ---------------------------------------------------------- server to client

// dim x dim matrix, one per mirror element; applied as z' = z @ M.
const mirrorTableSchema = z.array(z.array(finite));

export const factorSchema = z.object({
  name: z.string().min(1),
  state_slice: z.array(z.number().int().nonnegative()),
  algorithm: z.enum(["diayn", "metra"]),
  dim: z.number().int().positive(),
  mirror: z.string(),
  mirror_tables: z.record(z.string(), mirrorTableSchema),
});

export const registryFrameSchema = z.object({
  type: z.literal("registry"),
  factors: z.array(factorSchema).min(1),
  total_dim: z.number().int().positive(),
  num_weights: z.number().int().min(2),
  step_hz: z.number().positive(),
  broadcast_hz: z.number().positive(),
  dt: z.number().positive(),
});

export const stateFrameSchema = z.object({
  type: z.literal("state"),
  t: finite,
  step: z.number().int().nonnegative(),
  paused: z.boolean(),
  state: z.array(finite).length(10),
  factor_states: z.record(z.string(), z.array(finite)),
  applied_z: z.record(z.string(), z.array(finite)),
  applied_lam: z.array(finite),
  scores: z.record(z.string(), finite),
  rewards: z.record(z.string(), finite),
});

export const errorFrameSchema = z.object({
  type: z.literal("error"),
  code: z.number().int(),
  detail: z.string(),
});

export type FactorInfo = z.infer<typeof factorSchema>;
export type RegistryFrame = z.infer<typeof registryFrameSchema>;
export type StateFrame = z.infer<typeof stateFrameSchema>;
export type ErrorFrame = z.infer<typeof errorFrameSchema>;
export type ServerFrame = RegistryFrame | StateFrame | ErrorFrame;

/** Parse one inbound text frame; null when it is not a known server frame. */
export function parseServerFrame(text: string): ServerFrame | null {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof raw !== "object" || raw === null) return null;
  const kind = (raw as { type?: unknown }).type;
  const schema =
    kind === "registry"
      ? registryFrameSchema
      : kind === "state"
        ? stateFrameSchema
        : kind === "error"
          ? errorFrameSchema
          : null;
  if (!schema) return null;
  const res = schema.safeParse(raw);
  return res.success ? res.data : null;
}

/** Serialize an outbound frame, refusing anything schema-invalid. */
export function encodeClientFrame(frame: ClientFrame): string {
  const res = clientFrameSchema.safeParse(frame);
  if (!res.success) {
    throw new Error(`refusing to send invalid frame: ${res.error.message}`);
  }
  return JSON.stringify(res.data);
}
