// Session state: slider clamping against server-provided ranges and
// latest-wins tracking for in-flight audition requests.

import type { MaterialBody, Source } from "./api.js";

export interface SessionState {
  shapeId: number;
  material: MaterialBody;
  position: [number, number] | null;
  source: Source;
  abAlternate: Source;
  abActive: boolean;
  excitation: "impulse" | "noise-burst" | "click";
  requestToken: number;
}

export function initialState(ranges: Record<string, [number, number]>): SessionState {
  const mid = (k: string): number => (ranges[k][0] + ranges[k][1]) / 2;
  return {
    shapeId: 0,
    material: {
      rho: mid("rho"),
      youngs: mid("youngs"),
      poisson: mid("poisson"),
      alpha: mid("alpha"),
      beta: mid("beta"),
    },
    position: null,
    source: "oracle",
    abAlternate: "predictor",
    abActive: false,
    excitation: "impulse",
    requestToken: 0,
  };
}

export function clampMaterial(
  material: MaterialBody,
  ranges: Record<string, [number, number]>
): MaterialBody {
  const clamp = (value: number, key: string): number => {
    const [lo, hi] = ranges[key];
    return Math.min(hi, Math.max(lo, value));
  };
  return {
    rho: clamp(material.rho, "rho"),
    youngs: clamp(material.youngs, "youngs"),
    poisson: clamp(material.poisson, "poisson"),
    alpha: clamp(material.alpha, "alpha"),
    beta: clamp(material.beta, "beta"),
  };
}

export function activeSource(state: SessionState): Source {
  return state.abActive ? state.abAlternate : state.source;
}

// Latest-wins: each issued request takes a fresh token; a response is applied
// only if its token still matches (stale responses are dropped).
export function issueRequest(state: SessionState): { state: SessionState; token: number } {
  const token = state.requestToken + 1;
  return { state: { ...state, requestToken: token }, token };
}

export function isCurrent(state: SessionState, token: number): boolean {
  return state.requestToken === token;
}
