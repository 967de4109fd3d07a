// Feedback form and steering controls.
//
// The five sliders are built from the ranges announced in the hello frame,
// so their bounds always match the normalization the model uses. A
// confidence slider and a formation selector fed by the prototype library
// complete the form. Submission is guarded by the session's query id check;
// the form never bypasses it.

import { asDim } from "./prefs.js";
import type { ConsoleSession } from "./session.js";
import type { PrefDim, PrefValues } from "./types.js";

const SLIDER_LABELS: Record<PrefDim, string> = {
  h_inner: "inner distance (m)",
  h_height: "flying height (m)",
  h_speed: "flying speed (m/s)",
  h_safety: "safety distance (m)",
  h_formation: "formation stiffness",
};

export interface FeedbackFormHandles {
  root: HTMLElement;
  setFromPrediction(predicted: PrefValues): void;
  readValues(): PrefValues;
  readConfidence(): number;
  setEnabled(enabled: boolean): void;
}

export function buildFeedbackForm(
  session: ConsoleSession,
  onSubmit: () => void,
): FeedbackFormHandles {
  const hello = session.hello;
  if (!hello) throw new Error("form requires a completed handshake");

  const root = document.createElement("div");
  root.className = "feedback-form";

  const sliders = new Map<PrefDim, HTMLInputElement>();
  const readouts = new Map<PrefDim, HTMLSpanElement>();

  for (const name of hello.pref_dims) {
    const dim = asDim(name);
    if (!dim) continue;
    const [lo, hi] = hello.ranges[dim];
    const row = document.createElement("label");
    row.className = "slider-row";
    const caption = document.createElement("span");
    caption.textContent = SLIDER_LABELS[dim];
    const input = document.createElement("input");
    input.type = "range";
    input.min = String(lo);
    input.max = String(hi);
    input.step = String((hi - lo) / 200);
    input.value = String((lo + hi) / 2);
    const readout = document.createElement("span");
    readout.className = "readout";
    readout.textContent = Number(input.value).toFixed(2);
    input.addEventListener("input", () => {
      readout.textContent = Number(input.value).toFixed(2);
    });
    row.append(caption, input, readout);
    root.append(row);
    sliders.set(dim, input);
    readouts.set(dim, readout);
  }

  const confRow = document.createElement("label");
  confRow.className = "slider-row";
  const confCaption = document.createElement("span");
  confCaption.textContent = "confidence";
  const conf = document.createElement("input");
  conf.type = "range";
  conf.min = "0";
  conf.max = "1";
  conf.step = "0.05";
  conf.value = "0.8";
  const confReadout = document.createElement("span");
  confReadout.className = "readout";
  confReadout.textContent = conf.value;
  conf.addEventListener("input", () => {
    confReadout.textContent = Number(conf.value).toFixed(2);
  });
  confRow.append(confCaption, conf, confReadout);
  root.append(confRow);

  const protoRow = document.createElement("label");
  protoRow.className = "slider-row";
  const protoCaption = document.createElement("span");
  protoCaption.textContent = "formation";
  const protoSelect = document.createElement("select");
  for (const proto of hello.prototypes) {
    const opt = document.createElement("option");
    opt.value = proto.name;
    opt.textContent = proto.name;
    protoSelect.append(opt);
  }
  protoRow.append(protoCaption, protoSelect);
  root.append(protoRow);

  const submit = document.createElement("button");
  submit.textContent = "send guidance";
  submit.addEventListener("click", onSubmit);
  root.append(submit);

  function setFromPrediction(predicted: PrefValues): void {
    for (const [dim, input] of sliders) {
      const [lo, hi] = hello!.ranges[dim];
      const v = Math.min(hi, Math.max(lo, predicted[dim]));
      input.value = String(v);
      readouts.get(dim)!.textContent = v.toFixed(2);
    }
  }

  function readValues(): PrefValues {
    const out = {} as PrefValues;
    for (const [dim, input] of sliders) {
      out[dim] = Number(input.value);
    }
    return out;
  }

  function readConfidence(): number {
    return Number(conf.value);
  }

  function setEnabled(enabled: boolean): void {
    for (const input of sliders.values()) input.disabled = !enabled;
    conf.disabled = !enabled;
    protoSelect.disabled = !enabled;
    submit.disabled = !enabled;
  }

  setEnabled(false);
  return { root, setFromPrediction, readValues, readConfidence, setEnabled };
}

export interface SteeringHandles {
  root: HTMLElement;
  refresh(): void;
}

export function buildSteering(session: ConsoleSession): SteeringHandles {
  const root = document.createElement("div");
  root.className = "steering";

  const pause = document.createElement("button");
  pause.textContent = "pause";
  pause.addEventListener("click", () => session.control("pause"));

  const resume = document.createElement("button");
  resume.textContent = "resume";
  resume.addEventListener("click", () => session.control("resume"));

  const abort = document.createElement("button");
  abort.textContent = "abort";
  abort.addEventListener("click", () => {
    if (window.confirm("abort the mission?")) session.control("abort");
  });

  const thresholdLabel = document.createElement("label");
  thresholdLabel.textContent = "query threshold";
  const threshold = document.createElement("input");
  threshold.type = "number";
  threshold.min = "0";
  threshold.step = "0.01";
  threshold.value = "0.05";
  const apply = document.createElement("button");
  apply.textContent = "set";
  apply.addEventListener("click", () => {
    const v = Number(threshold.value);
    if (Number.isFinite(v) && v >= 0) session.control("set_threshold", v);
  });
  thresholdLabel.append(threshold, apply);

  root.append(pause, resume, abort, thresholdLabel);

  function refresh(): void {
    const enabled = session.controlsEnabled;
    pause.disabled = !enabled || session.snapshot?.paused === true;
    resume.disabled = !enabled || session.snapshot?.paused !== true;
    abort.disabled = !enabled;
    threshold.disabled = !enabled;
    apply.disabled = !enabled;
    if (session.snapshot) {
      threshold.placeholder = session.snapshot.threshold.toString();
    }
  }

  refresh();
  return { root, refresh };
}
