// Preference arithmetic shared by the sliders and the scripted oracle.
//
// Normalization must match the service exactly, operation for operation:
// norm = (y - lo) / (hi - lo), denorm = lo + t * (hi - lo). The scripted
// oracle below reproduces the service's synthetic operator for the zero
// spread case, where the answer is a pure function of the environment.

import { PREF_DIMS } from "./types.js";
import type { OracleSpec, PrefDim, PrefValues, Ranges } from "./types.js";

export function normalize(values: PrefValues, ranges: Ranges): PrefValues {
  const out = {} as PrefValues;
  for (const k of PREF_DIMS) {
    const [lo, hi] = ranges[k];
    out[k] = (values[k] - lo) / (hi - lo);
  }
  return out;
}

export function denormalize(norm: PrefValues, ranges: Ranges): PrefValues {
  const out = {} as PrefValues;
  for (const k of PREF_DIMS) {
    const [lo, hi] = ranges[k];
    out[k] = lo + norm[k] * (hi - lo);
  }
  return out;
}

export function clamp01(norm: PrefValues): PrefValues {
  const out = {} as PrefValues;
  for (const k of PREF_DIMS) {
    out[k] = Math.min(1, Math.max(0, norm[k]));
  }
  return out;
}

export function clampToRanges(values: PrefValues, ranges: Ranges): PrefValues {
  const out = {} as PrefValues;
  for (const k of PREF_DIMS) {
    const [lo, hi] = ranges[k];
    out[k] = Math.min(hi, Math.max(lo, values[k]));
  }
  return out;
}

export function prefsEqual(a: PrefValues, b: PrefValues): boolean {
  return PREF_DIMS.every((k) => a[k] === b[k]);
}

export function asDim(name: string): PrefDim | null {
  return (PREF_DIMS as readonly string[]).includes(name)
    ? (name as PrefDim)
    : null;
}

export interface OracleAnswer {
  values: PrefValues;
  confidence: number;
}

/**
 * Deterministic replay of the synthetic operator for an environment whose
 * spread is zero: normalize the configured mean, clip to [0, 1], denormalize.
 * Environments with nonzero spread cannot be replayed client side; callers
 * should refuse them rather than answer with the wrong distribution.
 */
export function scriptedOracleAnswer(
  oracle: OracleSpec,
  env: string,
  ranges: Ranges,
): OracleAnswer {
  const spec = oracle.envs[env];
  if (!spec) {
    throw new Error(`oracle has no environment ${env}`);
  }
  let stdSum = 0;
  for (const k of PREF_DIMS) {
    if (spec.std_norm[k] !== 0) {
      throw new Error(`environment ${env} has nonzero spread on ${k}`);
    }
    stdSum += spec.std_norm[k];
  }
  const values = denormalize(clamp01(normalize(spec.mean, ranges)), ranges);
  const confidence = Math.min(
    1,
    Math.max(0.5, 1 - (4 * stdSum) / PREF_DIMS.length),
  );
  return { values, confidence };
}
