// Biquad-bank realization matching the server's coefficient export:
// rows [b0, b1, b2, a1, a2], branch-major then cascade order. Each branch is
// a cascade of transposed direct form II sections; branch outputs sum.

export function renderSections(
  sections: number[][],
  L: number,
  M: number,
  excitation: Float32Array,
  nOut: number
): Float32Array {
  if (sections.length !== L * M) {
    throw new Error(`expected ${L * M} sections, got ${sections.length}`);
  }
  const out = new Float64Array(nOut);
  for (let l = 0; l < L; l++) {
    let x = new Float64Array(nOut);
    for (let t = 0; t < Math.min(nOut, excitation.length); t++) x[t] = excitation[t];
    for (let m = 0; m < M; m++) {
      const [b0, b1, b2, a1, a2] = sections[l * M + m];
      const y = new Float64Array(nOut);
      let s1 = 0;
      let s2 = 0;
      for (let t = 0; t < nOut; t++) {
        const xn = x[t];
        const yn = b0 * xn + s1;
        s1 = b1 * xn - a1 * yn + s2;
        s2 = b2 * xn - a2 * yn;
        y[t] = yn;
      }
      x = y;
    }
    for (let t = 0; t < nOut; t++) out[t] += x[t];
  }
  return Float32Array.from(out);
}

// Modal oscillator bank for the oracle source: damped sinusoids with
// amplitude gain^2 / w_d, peak-normalized (mirrors the server's renderer).
export function renderModal(
  freqsHz: number[],
  sigmas: number[],
  gains: number[],
  sampleRate: number,
  nOut: number
): Float32Array {
  const out = new Float64Array(nOut);
  const nyquist = sampleRate / 2;
  for (let i = 0; i < freqsHz.length; i++) {
    const omega = 2 * Math.PI * freqsHz[i];
    const wd = Math.sqrt(Math.max(omega * omega - sigmas[i] * sigmas[i], 0));
    if (wd <= 0 || wd / (2 * Math.PI) >= nyquist) continue;
    const amp = (gains[i] * gains[i]) / wd;
    for (let t = 0; t < nOut; t++) {
      const ts = t / sampleRate;
      out[t] += amp * Math.exp(-sigmas[i] * ts) * Math.sin(wd * ts);
    }
  }
  let peak = 0;
  for (let t = 0; t < nOut; t++) peak = Math.max(peak, Math.abs(out[t]));
  if (peak > 0) for (let t = 0; t < nOut; t++) out[t] /= peak;
  return Float32Array.from(out);
}

export type ExcitationKind = "impulse" | "noise-burst" | "click";

// Deterministic LCG so auditions are reproducible.
function lcg(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (1664525 * state + 1013904223) >>> 0;
    return state / 2 ** 32;
  };
}

export function makeExcitation(kind: ExcitationKind, sampleRate: number, seed = 1): Float32Array {
  switch (kind) {
    case "impulse": {
      const x = new Float32Array(1);
      x[0] = 1;
      return x;
    }
    case "noise-burst": {
      // ~25 ms decaying noise
      const n = Math.round(0.025 * sampleRate);
      const rand = lcg(seed);
      const x = new Float32Array(n);
      for (let t = 0; t < n; t++) {
        x[t] = (2 * rand() - 1) * Math.exp((-5 * t) / n);
      }
      return x;
    }
    case "click": {
      // 2 ms raised-cosine pulse
      const n = Math.max(8, Math.round(0.002 * sampleRate));
      const x = new Float32Array(n);
      for (let t = 0; t < n; t++) {
        x[t] = 0.5 * (1 - Math.cos((2 * Math.PI * t) / (n - 1)));
      }
      return x;
    }
  }
}

export function rms(samples: Float32Array, from = 0, to = samples.length): number {
  let acc = 0;
  for (let t = from; t < to; t++) acc += samples[t] * samples[t];
  return Math.sqrt(acc / Math.max(1, to - from));
}
