// Console session state machine.
//
// Pure with respect to I/O: frames go in through handleFrame, outbound
// messages leave through the send callback given at construction. The
// browser entry point binds it to a real websocket and the tests to a stub.
// Invariants: at most one pending query; feedback is only accepted for the
// query id currently pending (sequence guard); control and feedback are
// operator-only; frames with a stale seq are dropped.

import { encodeClientMessage, parseServerFrame } from "./schema.js";
import type {
  ControlAction,
  HelloFrame,
  PrefValues,
  QueryRequestFrame,
  RegionUpdateFrame,
  ServerFrame,
  StateSnapshotFrame,
} from "./types.js";

export type ConnectionState = "connecting" | "open" | "closed";

export interface SessionEvents {
  /** Any observable state change; drive a render from here. */
  onChange?: () => void;
  /** A query arrived and awaits an answer. */
  onQuery?: (q: QueryRequestFrame) => void;
  /** Server-reported protocol error. */
  onError?: (reason: string) => void;
}

export interface SubmitResult {
  ok: boolean;
  reason?: string;
}

const STALE_AFTER_MS = 2000;

export class ConsoleSession {
  connection: ConnectionState = "connecting";
  role: "operator" | "viewer" | null = null;
  hello: HelloFrame | null = null;
  snapshot: StateSnapshotFrame | null = null;
  region: RegionUpdateFrame | null = null;
  pendingQuery: QueryRequestFrame | null = null;
  /** Last H the mission adopted, echoed from preference_update frames. */
  adoptedPrefs: PrefValues | null = null;
  adoptedSource: "model" | "feedback" | null = null;
  lastSeq = -1;
  lastSnapshotAt: number | null = null;
  droppedFrames = 0;
  errors: string[] = [];

  private readonly send: (text: string) => void;
  private readonly events: SessionEvents;
  private readonly clock: () => number;

  constructor(
    send: (text: string) => void,
    events: SessionEvents = {},
    clock: () => number = () => Date.now(),
  ) {
    this.send = send;
    this.events = events;
    this.clock = clock;
  }

  // -- inbound ------------------------------------------------------------

  handleText(text: string): void {
    this.handleFrame(parseServerFrame(text));
  }

  handleFrame(frame: ServerFrame): void {
    if (frame.seq <= this.lastSeq) {
      this.droppedFrames += 1;
      return;
    }
    this.lastSeq = frame.seq;
    switch (frame.type) {
      case "hello":
        this.hello = frame;
        this.role = frame.role;
        this.connection = "open";
        break;
      case "state_snapshot":
        this.snapshot = frame;
        this.lastSnapshotAt = this.clock();
        if (frame.done || frame.aborted) {
          this.pendingQuery = null;
        }
        break;
      case "region_update":
        this.region = frame;
        break;
      case "preference_update":
        this.adoptedPrefs = frame.values;
        this.adoptedSource = frame.source;
        // an adoption means the pending query was resolved, by us or by
        // the timeout fallback on the server
        if (this.pendingQuery && frame.tick >= this.pendingQuery.tick) {
          this.pendingQuery = null;
        }
        break;
      case "query_request":
        this.pendingQuery = frame;
        this.events.onQuery?.(frame);
        break;
      case "error":
        this.errors.push(frame.reason);
        this.events.onError?.(frame.reason);
        break;
    }
    this.events.onChange?.();
  }

  markClosed(): void {
    this.connection = "closed";
    this.events.onChange?.();
  }

  // -- derived state -------------------------------------------------------

  get isOperator(): boolean {
    return this.connection === "open" && this.role === "operator";
  }

  get controlsEnabled(): boolean {
    return this.isOperator && !(this.snapshot?.done || this.snapshot?.aborted);
  }

  /** True when no snapshot arrived for a while on a live connection. */
  isStale(): boolean {
    if (this.connection !== "open" || this.lastSnapshotAt === null) {
      return false;
    }
    if (this.snapshot?.done || this.snapshot?.aborted) return false;
    return this.clock() - this.lastSnapshotAt > STALE_AFTER_MS;
  }

  // -- outbound ------------------------------------------------------------

  /**
   * Answer the pending query. Rejected without touching the wire when there
   * is no pending query, the id is stale, or this client is a viewer.
   */
  submitFeedback(
    queryId: number,
    values: PrefValues,
    confidence: number,
  ): SubmitResult {
    if (!this.isOperator) {
      return { ok: false, reason: "operator role required" };
    }
    if (!this.pendingQuery) {
      return { ok: false, reason: "no pending query" };
    }
    if (this.pendingQuery.query_id !== queryId) {
      return { ok: false, reason: "stale query id" };
    }
    this.send(
      encodeClientMessage({
        type: "feedback",
        query_id: queryId,
        values,
        confidence,
      }),
    );
    this.pendingQuery = null;
    this.events.onChange?.();
    return { ok: true };
  }

  control(action: ControlAction, value?: number): SubmitResult {
    if (!this.isOperator) {
      return { ok: false, reason: "operator role required" };
    }
    if (action === "set_threshold" && (value === undefined || value < 0)) {
      return { ok: false, reason: "set_threshold needs a value >= 0" };
    }
    const msg =
      action === "set_threshold"
        ? { type: "control" as const, action, value }
        : { type: "control" as const, action };
    this.send(encodeClientMessage(msg));
    this.events.onChange?.();
    return { ok: true };
  }
}
