// Small planar geometry helpers for the map view.
//
// The safe region arrives as halfspaces A x <= b in 3-D. The map is a
// top-down slice, so the polygon drawn is the region cut by the plane
// z = z0: every halfspace becomes ax*x + ay*y <= b - az*z0 and the polygon
// is the (possibly empty) intersection of those halfplanes.

export interface Pt {
  x: number;
  y: number;
}

const EPS = 1e-9;

/**
 * Intersection of halfplanes {a[i][0]*x + a[i][1]*y <= c[i]} as a convex
 * polygon in counterclockwise order. Vertices come from pairwise line
 * intersections filtered by all constraints. Returns [] when the slice is
 * empty or unbounded in every candidate direction.
 */
export function halfplanePolygon(a: number[][], c: number[]): Pt[] {
  const n = a.length;
  const pts: Pt[] = [];
  for (let i = 0; i < n; i++) {
    for (let j = i + 1; j < n; j++) {
      const det = a[i][0] * a[j][1] - a[i][1] * a[j][0];
      if (Math.abs(det) < EPS) continue;
      const x = (c[i] * a[j][1] - c[j] * a[i][1]) / det;
      const y = (a[i][0] * c[j] - a[j][0] * c[i]) / det;
      let ok = true;
      for (let k = 0; k < n; k++) {
        if (a[k][0] * x + a[k][1] * y > c[k] + 1e-6) {
          ok = false;
          break;
        }
      }
      if (ok && Number.isFinite(x) && Number.isFinite(y)) {
        pts.push({ x, y });
      }
    }
  }
  if (pts.length < 3) return [];
  const cx = pts.reduce((s, p) => s + p.x, 0) / pts.length;
  const cy = pts.reduce((s, p) => s + p.y, 0) / pts.length;
  const sorted = pts
    .slice()
    .sort(
      (p, q) => Math.atan2(p.y - cy, p.x - cx) - Math.atan2(q.y - cy, q.x - cx),
    );
  // drop near-duplicate vertices produced by three planes meeting in a point
  const out: Pt[] = [];
  for (const p of sorted) {
    const last = out[out.length - 1];
    if (!last || Math.hypot(p.x - last.x, p.y - last.y) > 1e-7) {
      out.push(p);
    }
  }
  if (out.length >= 2) {
    const first = out[0];
    const last = out[out.length - 1];
    if (Math.hypot(first.x - last.x, first.y - last.y) <= 1e-7) out.pop();
  }
  return out.length >= 3 ? out : [];
}

/** Slice A x <= b (3-D halfspaces) at height z0. */
export function polytopeSliceAt(
  A: number[][],
  b: number[],
  z0: number,
): Pt[] {
  const a2: number[][] = [];
  const c2: number[] = [];
  for (let i = 0; i < A.length; i++) {
    a2.push([A[i][0], A[i][1]]);
    c2.push(b[i] - A[i][2] * z0);
  }
  return halfplanePolygon(a2, c2);
}

/** Linear world-to-screen mapping that fits a bounds box into a viewport. */
export interface ViewTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
  height: number;
}

export function fitView(
  xMin: number,
  yMin: number,
  xMax: number,
  yMax: number,
  width: number,
  height: number,
  margin = 12,
): ViewTransform {
  const sx = (width - 2 * margin) / Math.max(xMax - xMin, 1e-9);
  const sy = (height - 2 * margin) / Math.max(yMax - yMin, 1e-9);
  const scale = Math.min(sx, sy);
  return {
    scale,
    offsetX: margin - xMin * scale,
    offsetY: margin - yMin * scale,
    height,
  };
}

/** World (x, y) to screen pixels, y axis flipped so north is up. */
export function toScreen(v: ViewTransform, x: number, y: number): [number, number] {
  return [v.offsetX + x * v.scale, v.height - (v.offsetY + y * v.scale)];
}
