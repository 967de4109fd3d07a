// Runtime validation of wire frames, mirroring the service's schemas.
// Inbound frames are checked before they touch session state; outbound
// messages are checked before they are sent, so a console bug cannot put a
// malformed frame on the wire.

import { z } from "zod";
import { PREF_DIMS } from "./types.js";
import type { ClientMessage, ServerFrame } from "./types.js";

const vec3 = z.tuple([z.number(), z.number(), z.number()]);

const prefs = z
  .object(
    Object.fromEntries(PREF_DIMS.map((k) => [k, z.number()])) as Record<
      (typeof PREF_DIMS)[number],
      z.ZodNumber
    >,
  )
  .strict();

const matrix = z.array(z.array(z.number()));
const numbers = z.array(z.number());

const boxDict = z.object({ min: vec3, max: vec3 }).passthrough();

const scenarioDict = z
  .object({
    bounds: boxDict,
    obstacles: z.array(boxDict),
    regions: z.array(z.object({ label: z.string(), box: boxDict })),
    goal: vec3,
    grid_resolution: z.number(),
    robot_edge: z.number(),
  })
  .passthrough();

export const helloSchema = z
  .object({
    type: z.literal("hello"),
    seq: z.number().int(),
    role: z.enum(["operator", "viewer"]),
    pref_dims: z.array(z.string()),
    ranges: z.record(z.tuple([z.number(), z.number()])),
    prototypes: z.array(
      z.object({ name: z.string(), positions: matrix }).passthrough(),
    ),
    scenario: scenarioDict,
    query_timeout_s: z.number().optional(),
  })
  .passthrough();

export const stateSnapshotSchema = z
  .object({
    type: z.literal("state_snapshot"),
    seq: z.number().int(),
    tick: z.number().int(),
    waypoint_index: z.number().int().optional(),
    n_waypoints: z.number().int().optional(),
    waypoint: vec3,
    goal: vec3,
    robots: z.array(
      z.object({ id: z.number().int(), position: vec3, velocity: vec3 }),
    ),
    centroid: vec3,
    preferences: prefs,
    formation: z.string().nullable().optional(),
    budget: z.number().int(),
    threshold: z.number(),
    violations: z.number().int().optional(),
    paused: z.boolean(),
    done: z.boolean(),
    aborted: z.boolean(),
    success: z.boolean().optional(),
  })
  .passthrough();

export const regionUpdateSchema = z
  .object({
    type: z.literal("region_update"),
    seq: z.number().int(),
    tick: z.number().int(),
    polytope: z.object({ A: matrix, b: numbers }).nullable(),
    ellipsoid: z.object({ C: matrix, d: vec3 }).nullable().optional(),
    dilated: z
      .object({
        A: matrix,
        b: numbers.optional(),
        offsets: numbers,
        feasible: z.boolean(),
      })
      .nullable(),
  })
  .passthrough();

export const preferenceUpdateSchema = z
  .object({
    type: z.literal("preference_update"),
    seq: z.number().int(),
    tick: z.number().int(),
    source: z.enum(["model", "feedback"]),
    values: prefs,
  })
  .passthrough();

export const queryRequestSchema = z
  .object({
    type: z.literal("query_request"),
    seq: z.number().int(),
    tick: z.number().int(),
    query_id: z.number().int(),
    env: z.string(),
    predicted: prefs,
    trace: z.number(),
    timeout_s: z.number(),
  })
  .passthrough();

export const errorSchema = z
  .object({
    type: z.literal("error"),
    seq: z.number().int(),
    reason: z.string(),
  })
  .passthrough();

const serverFrame = z.discriminatedUnion("type", [
  helloSchema,
  stateSnapshotSchema,
  regionUpdateSchema,
  preferenceUpdateSchema,
  queryRequestSchema,
  errorSchema,
]);

export const feedbackSchema = z
  .object({
    type: z.literal("feedback"),
    query_id: z.number().int(),
    values: prefs,
    confidence: z.number().min(0).max(1),
  })
  .strict();

export const controlSchema = z
  .object({
    type: z.literal("control"),
    action: z.enum(["pause", "resume", "abort", "set_threshold"]),
    value: z.number().optional(),
  })
  .strict();

const clientMessage = z.discriminatedUnion("type", [
  feedbackSchema,
  controlSchema,
]);

export class FrameError extends Error {}

/** Parse and validate one inbound text frame. Throws FrameError. */
export function parseServerFrame(text: string): ServerFrame {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch (e) {
    throw new FrameError(`not json: ${String(e)}`);
  }
  const res = serverFrame.safeParse(raw);
  if (!res.success) {
    throw new FrameError(`bad server frame: ${res.error.message}`);
  }
  return res.data as ServerFrame;
}

/** Validate an outbound message; returns its wire text. Throws FrameError. */
export function encodeClientMessage(msg: ClientMessage): string {
  const res = clientMessage.safeParse(msg);
  if (!res.success) {
    throw new FrameError(`bad client message: ${res.error.message}`);
  }
  return JSON.stringify(res.data);
}
