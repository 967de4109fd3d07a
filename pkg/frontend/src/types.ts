// Wire protocol types. JSON text frames over a websocket; the server sends
// hello, state_snapshot, region_update, preference_update, query_request and
// error, the client sends feedback and control. Geometry is meters, world
// frame, z-up. Every server frame carries a monotonically increasing seq.

export const PREF_DIMS = [
  "h_inner",
  "h_height",
  "h_speed",
  "h_safety",
  "h_formation",
] as const;

export type PrefDim = (typeof PREF_DIMS)[number];

export type PrefValues = Record<PrefDim, number>;

export type Ranges = Record<PrefDim, [number, number]>;

export type Vec3 = [number, number, number];

export interface BoxDict {
  min: Vec3;
  max: Vec3;
}

export interface ScenarioDict {
  bounds: BoxDict;
  obstacles: BoxDict[];
  regions: { label: string; box: BoxDict }[];
  goal: Vec3;
  grid_resolution: number;
  robot_edge: number;
}

export interface PrototypeDict {
  name: string;
  positions: number[][];
}

export interface HelloFrame {
  type: "hello";
  seq: number;
  role: "operator" | "viewer";
  pref_dims: string[];
  ranges: Ranges;
  prototypes: PrototypeDict[];
  scenario: ScenarioDict;
  query_timeout_s?: number;
}

export interface RobotDict {
  id: number;
  position: Vec3;
  velocity: Vec3;
}

export interface StateSnapshotFrame {
  type: "state_snapshot";
  seq: number;
  tick: number;
  waypoint_index?: number;
  n_waypoints?: number;
  waypoint: Vec3;
  goal: Vec3;
  robots: RobotDict[];
  centroid: Vec3;
  preferences: PrefValues;
  formation?: string | null;
  budget: number;
  threshold: number;
  violations?: number;
  paused: boolean;
  done: boolean;
  aborted: boolean;
  success?: boolean;
}

export interface PolytopeDict {
  A: number[][];
  b: number[];
}

export interface DilatedDict {
  A: number[][];
  b?: number[];
  offsets: number[];
  feasible: boolean;
}

export interface RegionUpdateFrame {
  type: "region_update";
  seq: number;
  tick: number;
  polytope: PolytopeDict | null;
  ellipsoid: { C: number[][]; d: Vec3 } | null;
  dilated: DilatedDict | null;
}

export interface PreferenceUpdateFrame {
  type: "preference_update";
  seq: number;
  tick: number;
  source: "model" | "feedback";
  values: PrefValues;
}

export interface QueryRequestFrame {
  type: "query_request";
  seq: number;
  tick: number;
  query_id: number;
  env: string;
  predicted: PrefValues;
  trace: number;
  timeout_s: number;
}

export interface ErrorFrame {
  type: "error";
  seq: number;
  reason: string;
}

export type ServerFrame =
  | HelloFrame
  | StateSnapshotFrame
  | RegionUpdateFrame
  | PreferenceUpdateFrame
  | QueryRequestFrame
  | ErrorFrame;

export interface FeedbackMessage {
  type: "feedback";
  query_id: number;
  values: PrefValues;
  confidence: number;
}

export type ControlAction = "pause" | "resume" | "abort" | "set_threshold";

export interface ControlMessage {
  type: "control";
  action: ControlAction;
  value?: number;
}

export type ClientMessage = FeedbackMessage | ControlMessage;

// Synthetic operator description, same JSON the mission service loads: a
// preferred value per environment plus a per-output answer spread in
// normalized units.
export interface OracleSpec {
  format: string;
  envs: Record<
    string,
    { mean: PrefValues; std_norm: PrefValues }
  >;
}
