// Pure canvas geometry: the affine map between shape coordinates ([0,1]^2,
// y up) and canvas pixels (y down), plus the point-in-polygon click guard.

export interface ViewTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
  canvasHeight: number;
}

export function fitTransform(canvasWidth: number, canvasHeight: number, pad = 10): ViewTransform {
  const scale = Math.min(canvasWidth, canvasHeight) - 2 * pad;
  return {
    scale,
    offsetX: (canvasWidth - scale) / 2,
    offsetY: (canvasHeight - scale) / 2,
    canvasHeight,
  };
}

export function shapeToPixel(t: ViewTransform, x: number, y: number): { px: number; py: number } {
  return {
    px: t.offsetX + x * t.scale,
    py: t.canvasHeight - t.offsetY - y * t.scale,
  };
}

export function pixelToShape(t: ViewTransform, px: number, py: number): { x: number; y: number } {
  return {
    x: (px - t.offsetX) / t.scale,
    y: (t.canvasHeight - t.offsetY - py) / t.scale,
  };
}

// CCW convex polygon; boundary counts as inside.
export function pointInPolygon(vertices: [number, number][], x: number, y: number, tol = 1e-12): boolean {
  const n = vertices.length;
  for (let i = 0; i < n; i++) {
    const [x0, y0] = vertices[i];
    const [x1, y1] = vertices[(i + 1) % n];
    const cross = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0);
    if (cross < -tol) return false;
  }
  return true;
}

export type ClickAction =
  | { kind: "ignored" }
  | { kind: "audition"; position: [number, number] };

// A click becomes an audition only when it lands inside the polygon.
export function classifyClick(
  t: ViewTransform,
  vertices: [number, number][],
  px: number,
  py: number
): ClickAction {
  const { x, y } = pixelToShape(t, px, py);
  if (!pointInPolygon(vertices, x, y)) return { kind: "ignored" };
  return { kind: "audition", position: [x, y] };
}
