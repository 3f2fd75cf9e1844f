// Minimal RIFF/WAVE decoder for the formats the server emits
// (32-bit IEEE float mono) plus PCM16 for robustness.

export interface DecodedWav {
  sampleRate: number;
  samples: Float32Array;
}

export function decodeWav(buffer: ArrayBuffer): DecodedWav {
  const view = new DataView(buffer);
  const tag = (offset: number) =>
    String.fromCharCode(view.getUint8(offset), view.getUint8(offset + 1), view.getUint8(offset + 2), view.getUint8(offset + 3));
  if (tag(0) !== "RIFF" || tag(8) !== "WAVE") {
    throw new Error("not a RIFF/WAVE file");
  }
  let offset = 12;
  let format = 0;
  let channels = 1;
  let sampleRate = 0;
  let bitsPerSample = 0;
  let data: { start: number; length: number } | null = null;
  while (offset + 8 <= view.byteLength) {
    const id = tag(offset);
    const size = view.getUint32(offset + 4, true);
    if (id === "fmt ") {
      format = view.getUint16(offset + 8, true);
      channels = view.getUint16(offset + 10, true);
      sampleRate = view.getUint32(offset + 12, true);
      bitsPerSample = view.getUint16(offset + 22, true);
    } else if (id === "data") {
      data = { start: offset + 8, length: size };
    }
    offset += 8 + size + (size % 2);
  }
  if (!data || sampleRate === 0) throw new Error("missing fmt or data chunk");

  let samples: Float32Array;
  if (format === 3 && bitsPerSample === 32) {
    const n = data.length / 4;
    samples = new Float32Array(n);
    for (let i = 0; i < n; i++) samples[i] = view.getFloat32(data.start + 4 * i, true);
  } else if (format === 1 && bitsPerSample === 16) {
    const n = data.length / 2;
    samples = new Float32Array(n);
    for (let i = 0; i < n; i++) samples[i] = view.getInt16(data.start + 2 * i, true) / 32768;
  } else {
    throw new Error(`unsupported wav format ${format}/${bitsPerSample}`);
  }
  if (channels > 1) {
    const mono = new Float32Array(Math.floor(samples.length / channels));
    for (let i = 0; i < mono.length; i++) mono[i] = samples[i * channels];
    samples = mono;
  }
  return { sampleRate, samples };
}
