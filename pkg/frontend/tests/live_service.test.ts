// Integration tests against the real mission service.
//
// Each test spawns `swarmpref serve` as a child process, drives it through a
// websocket exactly the way the browser console does (same session state
// machine, same schema validation on every inbound frame), and checks the
// service's HTTP log afterwards. The headline test replays the synthetic
// operator client side and asserts the mission log digest is identical to a
// headless `swarmpref simulate` run of the same seed: the wire adds nothing
// and loses nothing.

import { afterAll, describe, expect, it } from "vitest";
import { execFile, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { promisify } from "node:util";
import WebSocket from "ws";

import { scriptedOracleAnswer } from "../src/prefs.js";
import { parseServerFrame } from "../src/schema.js";
import { ConsoleSession } from "../src/session.js";
import type {
  OracleSpec,
  ServerFrame,
  StateSnapshotFrame,
} from "../src/types.js";

const execFileP = promisify(execFile);

const here = dirname(fileURLToPath(import.meta.url));
const SCENARIO = join(here, "..", "fixtures", "console_scenario.json");
const ORACLE = join(here, "..", "fixtures", "console_oracle.json");
const oracleSpec: OracleSpec = JSON.parse(readFileSync(ORACLE, "utf8"));

const tmp = mkdtempSync(join(tmpdir(), "console-test-"));

const children: ChildProcess[] = [];

afterAll(() => {
  for (const child of children) {
    if (child.exitCode === null) child.kill("SIGTERM");
  }
});

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function until<T>(
  fn: () => T | undefined | null | false,
  timeoutMs: number,
  what: string,
): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const value = fn();
    if (value) return value;
    if (Date.now() > deadline) throw new Error(`timed out waiting for ${what}`);
    await sleep(25);
  }
}

function serveMission(port: number): ChildProcess {
  const child = spawn(
    "swarmpref",
    [
      "serve",
      "--scenario",
      SCENARIO,
      "--seed",
      "7",
      "--port",
      String(port),
      "--timeout",
      "30",
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  children.push(child);
  return child;
}

async function waitHealthy(port: number): Promise<void> {
  const deadline = Date.now() + 30_000;
  for (;;) {
    try {
      const res = await fetch(`http://127.0.0.1:${port}/healthz`);
      if (res.ok) return;
    } catch {
      // not listening yet
    }
    if (Date.now() > deadline)

      throw new Error(`service on port ${port} did not come up`);
    await sleep(200);
  }
}

async function getJson(port: number, path: string): Promise<any> {
  const res = await fetch(`http://127.0.0.1:${port}${path}`);
  expect(res.ok).toBe(true);
  return res.json();
}

interface Driver {
  session: ConsoleSession;
  frames: ServerFrame[];
  parseFailures: string[];
  sendRaw(text: string): void;
  close(): void;
}

/**
 * Connect to the service the way the browser console does. Every inbound
 * frame passes through the zod schemas before it touches the session, and
 * when `answer` is set, queries are answered with the scripted operator.
 */
function connectConsole(
  port: number,
  role: "operator" | "viewer",
  answer: boolean,
): Promise<Driver> {
  return new Promise((resolve, reject) => {
    const ws = new WebSocket(`ws://127.0.0.1:${port}/ws?role=${role}`);
    const frames: ServerFrame[] = [];
    const parseFailures: string[] = [];
    const session = new ConsoleSession((text) => ws.send(text), {
      onQuery: (q) => {
        if (!answer || !session.hello) return;
        const ans = scriptedOracleAnswer(oracleSpec, q.env, session.hello.ranges);
        const sent = session.submitFeedback(q.query_id, ans.values, ans.confidence);
        if (!sent.ok) parseFailures.push(`feedback rejected: ${sent.reason}`);
      },
    });
    ws.on("message", (data) => {
      let frame: ServerFrame;
      try {
        frame = parseServerFrame(data.toString());
      } catch (err) {
        parseFailures.push(String(err));
        return;
      }
      frames.push(frame);
      session.handleFrame(frame);
    });
    ws.on("close", () => session.markClosed());
    ws.on("error", reject);
    ws.on("open", () =>
      resolve({
        session,
        frames,
        parseFailures,
        sendRaw: (text) => ws.send(text),
        close: () => ws.close(),
      }),
    );
  });
}

function snapshots(frames: ServerFrame[]): StateSnapshotFrame[] {
  return frames.filter(
    (f): f is StateSnapshotFrame => f.type === "state_snapshot",
  );
}

function stripWallTime(events: Record<string, unknown>[]) {
  return events.map(({ wall_time, ...rest }) => rest);
}

describe("live mission service", () => {
  it(
    "wire-driven mission reproduces the headless digest",
    async () => {
      // headless reference run, same scenario, seed and synthetic operator
      const outPath = join(tmp, "headless.json");
      await execFileP(
        "swarmpref",
        [
          "simulate",
          "--scenario",
          SCENARIO,
          "--oracle",
          ORACLE,
          "--seed",
          "7",
          "--out",
          outPath,
        ],
        { timeout: 120_000 },
      );
      const headless = JSON.parse(readFileSync(outPath, "utf8"));
      expect(headless.summary.success).toBe(true);
      expect(headless.summary.queries_used).toBeGreaterThanOrEqual(1);

      const port = 8791;
      serveMission(port);
      await waitHealthy(port);
      const drv = await connectConsole(port, "operator", true);
      await until(() => drv.session.hello, 15_000, "hello");
      expect(drv.session.role).toBe("operator");

      const finalSnap = await until(
        () => {
          const s = drv.session.snapshot;
          return s && (s.done || s.aborted) ? s : undefined;
        },
        180_000,
        "mission end",
      );
      expect(finalSnap.done).toBe(true);
      expect(finalSnap.aborted).toBe(false);

      // every frame of a real session passed schema validation
      expect(drv.parseFailures).toEqual([]);

      // our feedback was adopted at least once along the way
      const sources = drv.frames
        .filter((f) => f.type === "preference_update")
        .map((f) => (f.type === "preference_update" ? f.source : ""));
      expect(sources).toContain("feedback");

      const summary = await getJson(port, "/summary");
      const log = await getJson(port, "/log");
      expect(summary.success).toBe(true);
      expect(summary.violations).toBe(0);
      expect(summary.queries_used).toBe(headless.summary.queries_used);

      // the strong check: identical digests, identical event streams
      expect(summary.digest).toBe(headless.summary.digest);
      expect(log.digest).toBe(headless.log.digest);
      expect(stripWallTime(log.events)).toEqual(
        stripWallTime(headless.log.events),
      );

      drv.close();
    },
    300_000,
  );

  it(
    "pause freezes the tick, resume releases it, abort ends the mission",
    async () => {
      const port = 8792;
      serveMission(port);
      await waitHealthy(port);
      const drv = await connectConsole(port, "operator", true);
      await until(() => drv.session.hello, 15_000, "hello");
      await until(() => drv.session.snapshot, 15_000, "first snapshot");

      // a viewer on the same mission is read-only on the server side too
      const viewer = await connectConsole(port, "viewer", false);
      await until(() => viewer.session.hello, 15_000, "viewer hello");
      expect(viewer.session.role).toBe("viewer");
      viewer.sendRaw(JSON.stringify({ type: "control", action: "pause" }));
      await until(
        () => viewer.session.errors.some((e) => /operator/.test(e)),
        15_000,
        "viewer rejection",
      );

      // garbage and stale feedback are answered with error frames, not crashes
      drv.sendRaw("not json");
      await until(
        () => drv.session.errors.length >= 1,
        15_000,
        "malformed message rejection",
      );
      drv.sendRaw(
        JSON.stringify({
          type: "feedback",
          query_id: 999_999,
          values: oracleSpec.envs.open_space.mean,
          confidence: 1,
        }),
      );
      await until(
        () => drv.session.errors.some((e) => /stale/.test(e)),
        15_000,
        "stale feedback rejection",
      );

      // pause: the ack snapshot fixes the tick and nothing moves after it
      expect(drv.session.control("pause").ok).toBe(true);
      const pauseAck = await until(
        () => snapshots(drv.frames).find((s) => s.paused),
        15_000,
        "pause ack",
      );
      const frozen = pauseAck.tick;
      await sleep(600);
      const afterAck = snapshots(drv.frames).filter(
        (s) => s.seq >= pauseAck.seq,
      );
      expect(afterAck.length).toBeGreaterThan(0);
      for (const s of afterAck) {
        expect(s.paused).toBe(true);
        expect(s.tick).toBe(frozen);
      }

      // resume: the ack still carries the frozen tick, so the pause cost
      // exactly zero ticks; progress resumes after it
      expect(drv.session.control("resume").ok).toBe(true);
      const resumeAck = await until(
        () =>
          snapshots(drv.frames).find((s) => !s.paused && s.seq > pauseAck.seq),
        15_000,
        "resume ack",
      );
      expect(resumeAck.tick).toBe(frozen);
      await until(
        () => snapshots(drv.frames).find((s) => s.tick > frozen),
        30_000,
        "ticks advancing after resume",
      );

      // abort mid-flight
      expect(drv.session.control("abort").ok).toBe(true);
      const last = await until(
        () => {
          const s = drv.session.snapshot;
          return s && s.aborted ? s : undefined;
        },
        30_000,
        "abort ack",
      );
      expect(last.aborted).toBe(true);
      expect(drv.session.controlsEnabled).toBe(false);

      const summary = await getJson(port, "/summary");
      expect(summary.aborted).toBe(true);
      expect(summary.done).toBe(false);
      const log = await getJson(port, "/log");
      const kinds = log.events.map((e: { type: string }) => e.type);
      expect(kinds[kinds.length - 1]).toBe("abort");

      drv.close();
      viewer.close();
    },
    180_000,
  );

  it(
    "raising the query threshold suppresses queries",
    async () => {
      const port = 8793;
      serveMission(port);
      await waitHealthy(port);
      // no auto answer: hold the first query open so the threshold lands
      // while the mission is provably stalled on it
      const drv = await connectConsole(port, "operator", false);
      await until(() => drv.session.hello, 15_000, "hello");
      const firstQuery = await until(
        () => drv.session.pendingQuery,
        30_000,
        "first query",
      );

      expect(drv.session.control("set_threshold", 1e9).ok).toBe(true);
      const ack = await until(
        () => snapshots(drv.frames).find((s) => s.threshold === 1e9),
        15_000,
        "threshold ack",
      );
      expect(ack.threshold).toBe(1e9);

      const ans = scriptedOracleAnswer(
        oracleSpec,
        firstQuery.env,
        drv.session.hello!.ranges,
      );
      expect(
        drv.session.submitFeedback(firstQuery.query_id, ans.values, ans.confidence)
          .ok,
      ).toBe(true);

      const finalSnap = await until(
        () => {
          const s = drv.session.snapshot;
          return s && (s.done || s.aborted) ? s : undefined;
        },
        180_000,
        "mission end",
      );
      expect(finalSnap.done).toBe(true);

      // the default run asks several times; with the bar out of reach only
      // the query that was already in flight got through
      const summary = await getJson(port, "/summary");
      expect(summary.queries_used).toBe(1);
      const queriesAfterAck = drv.frames.filter(
        (f) => f.type === "query_request" && f.seq > ack.seq,
      );
      expect(queriesAfterAck).toEqual([]);

      drv.close();
    },
    300_000,
  );
});
