// Browser entry point: shape picker, clickable canvas, material sliders,
// source selector with A/B toggle, excitation picker, audio playback.
// All physics comes from the server; the client only realizes filter
// sections (or plays oracle WAVs).

import { Client, isOracleResponse, MetaResponse, ShapeSummary } from "./api.js";
import { makeExcitation, renderSections, ExcitationKind } from "./dsp.js";
import { decodeWav } from "./wav.js";
import { classifyClick, fitTransform, shapeToPixel, ViewTransform } from "./view.js";
import { activeSource, clampMaterial, initialState, isCurrent, issueRequest, SessionState } from "./state.js";

const RENDER_SECONDS = 1.0;

const SLIDERS: { key: keyof SessionState["material"]; label: string; log: boolean }[] = [
  { key: "rho", label: "density ρ (kg/m³)", log: false },
  { key: "youngs", label: "Young's modulus E (Pa)", log: true },
  { key: "poisson", label: "Poisson ν", log: false },
  { key: "alpha", label: "damping α (1/s)", log: false },
  { key: "beta", label: "damping β (s)", log: true },
];

class App {
  private client = new Client("");
  private meta!: MetaResponse;
  private shapes: ShapeSummary[] = [];
  private state!: SessionState;
  private transform!: ViewTransform;
  private cells: number[][] = [];
  private vertices: [number, number][] = [];
  private audio: AudioContext | null = null;
  private canvas = document.getElementById("shape-canvas") as HTMLCanvasElement;
  private status = document.getElementById("status") as HTMLElement;
  private info = document.getElementById("mode-info") as HTMLElement;

  async start(): Promise<void> {
    this.meta = await this.client.meta();
    this.shapes = await this.client.shapes();
    this.state = initialState(this.meta.material_ranges);
    this.buildShapePicker();
    this.buildSliders();
    this.buildSourceControls();
    await this.loadShape(0);
    this.canvas.addEventListener("click", (ev) => this.onClick(ev));
    window.addEventListener("resize", () => this.draw());
    this.setStatus("ready — click inside the shape to hear it");
  }

  private setStatus(text: string, isError = false): void {
    this.status.textContent = text;
    this.status.className = isError ? "error" : "";
  }

  private buildShapePicker(): void {
    const select = document.getElementById("shape-select") as HTMLSelectElement;
    for (const s of this.shapes) {
      const opt = document.createElement("option");
      opt.value = String(s.id);
      opt.textContent = `shape ${s.id} (${s.n_vertices} vertices)`;
      select.appendChild(opt);
    }
    select.addEventListener("change", () => void this.loadShape(Number(select.value)));
  }

  private buildSliders(): void {
    const host = document.getElementById("sliders") as HTMLElement;
    for (const spec of SLIDERS) {
      const [lo, hi] = this.meta.material_ranges[spec.key];
      const row = document.createElement("label");
      row.className = "slider-row";
      const title = document.createElement("span");
      const input = document.createElement("input");
      input.type = "range";
      input.min = "0";
      input.max = "1000";
      const toUnit = (v: number) =>
        spec.log
          ? (Math.log(v) - Math.log(lo)) / (Math.log(hi) - Math.log(lo))
          : (v - lo) / (hi - lo);
      const fromUnit = (u: number) =>
        spec.log ? lo * Math.exp(u * (Math.log(hi) - Math.log(lo))) : lo + u * (hi - lo);
      const refresh = () => {
        title.textContent = `${spec.label}: ${this.state.material[spec.key].toPrecision(3)}`;
      };
      input.value = String(1000 * toUnit(this.state.material[spec.key]));
      input.addEventListener("input", () => {
        const value = fromUnit(Number(input.value) / 1000);
        this.state.material = clampMaterial(
          { ...this.state.material, [spec.key]: value },
          this.meta.material_ranges
        );
        refresh();
        if (this.state.position) void this.audition();
      });
      refresh();
      row.append(title, input);
      host.appendChild(row);
    }
  }

  private buildSourceControls(): void {
    const source = document.getElementById("source-select") as HTMLSelectElement;
    for (const s of this.meta.sources) {
      const opt = document.createElement("option");
      opt.value = s;
      opt.textContent = s;
      source.appendChild(opt);
    }
    source.value = this.state.source;
    source.addEventListener("change", () => {
      this.state.source = source.value as SessionState["source"];
      if (this.state.position) void this.audition();
    });
    const excitation = document.getElementById("excitation-select") as HTMLSelectElement;
    excitation.addEventListener("change", () => {
      this.state.excitation = excitation.value as ExcitationKind;
      if (this.state.position) void this.audition();
    });
    const ab = document.getElementById("ab-toggle") as HTMLButtonElement;
    ab.addEventListener("click", () => {
      this.state.abActive = !this.state.abActive;
      ab.textContent = this.state.abActive
        ? `B: ${this.state.abAlternate}`
        : `A: ${this.state.source}`;
      if (this.state.position) void this.audition();
    });
  }

  private async loadShape(id: number): Promise<void> {
    try {
      const doc = await this.client.occupancy(id);
      this.state.shapeId = id;
      this.state.position = null;
      this.cells = doc.cells;
      this.vertices = doc.vertices;
      this.draw();
    } catch (err) {
      this.setStatus(String(err), true);
    }
  }

  private draw(): void {
    const ctx = this.canvas.getContext("2d")!;
    const { width, height } = this.canvas;
    this.transform = fitTransform(width, height);
    ctx.clearRect(0, 0, width, height);
    const n = this.cells.length;
    if (n === 0) return;
    const cell = this.transform.scale / n;
    ctx.fillStyle = "#d8e6f2";
    for (let iy = 0; iy < n; iy++) {
      for (let ix = 0; ix < n; ix++) {
        if (!this.cells[iy][ix]) continue;
        const { px, py } = shapeToPixel(this.transform, ix / n, (iy + 1) / n);
        ctx.fillRect(px, py, cell + 0.5, cell + 0.5);
      }
    }
    ctx.strokeStyle = "#23506e";
    ctx.lineWidth = 2;
    ctx.beginPath();
    this.vertices.forEach(([x, y], i) => {
      const { px, py } = shapeToPixel(this.transform, x, y);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.closePath();
    ctx.stroke();
    if (this.state.position) {
      const [x, y] = this.state.position;
      const { px, py } = shapeToPixel(this.transform, x, y);
      ctx.fillStyle = "#d23c3c";
      ctx.beginPath();
      ctx.arc(px, py, 6, 0, 2 * Math.PI);
      ctx.fill();
    }
  }

  private onClick(ev: MouseEvent): void {
    const rect = this.canvas.getBoundingClientRect();
    const px = ((ev.clientX - rect.left) / rect.width) * this.canvas.width;
    const py = ((ev.clientY - rect.top) / rect.height) * this.canvas.height;
    const action = classifyClick(this.transform, this.vertices, px, py);
    if (action.kind === "ignored") {
      this.setStatus("click landed outside the shape — ignored");
      return;
    }
    this.state.position = action.position;
    this.draw();
    void this.audition();
  }

  private async audition(): Promise<void> {
    const position = this.state.position;
    if (!position) return;
    const source = activeSource(this.state);
    const issued = issueRequest(this.state);
    this.state = issued.state;
    const token = issued.token;
    const t0 = performance.now();
    const request = {
      shape_id: this.state.shapeId,
      material: this.state.material,
      position,
      source,
      seed: 0,
    };
    try {
      let samples: Float32Array;
      let sampleRate: number;
      if (source === "oracle" && this.state.excitation !== "impulse") {
        this.setStatus("oracle source plays the impulse response only", true);
        return;
      }
      if (source === "oracle") {
        const wav = decodeWav(await this.client.renderWav(request));
        samples = wav.samples;
        sampleRate = wav.sampleRate;
      } else {
        const resp = await this.client.synthesize(request);
        if (isOracleResponse(resp)) throw new Error("unexpected oracle payload");
        sampleRate = resp.sample_rate;
        const excitation = makeExcitation(this.state.excitation, sampleRate);
        samples = renderSections(
          resp.sections,
          resp.L,
          resp.M,
          excitation,
          Math.round(RENDER_SECONDS * sampleRate)
        );
        this.info.textContent = `${resp.L}x${resp.M} bank, ${resp.sections.length} sections`;
      }
      if (!isCurrent(this.state, token)) return; // a newer click superseded us
      this.play(samples, sampleRate);
      this.setStatus(
        `${source} audition in ${(performance.now() - t0).toFixed(0)} ms ` +
          `at (${position[0].toFixed(3)}, ${position[1].toFixed(3)})`
      );
    } catch (err) {
      this.setStatus(String(err), true);
    }
  }

  private play(samples: Float32Array, sampleRate: number): void {
    this.audio = this.audio ?? new AudioContext();
    const buffer = this.audio.createBuffer(1, samples.length, sampleRate);
    buffer.copyToChannel(new Float32Array(samples), 0);
    const node = this.audio.createBufferSource();
    node.buffer = buffer;
    node.connect(this.audio.destination);
    node.start();
  }
}

new App().start().catch((err) => {
  const status = document.getElementById("status");
  if (status) {
    status.textContent = String(err);
    status.className = "error";
  }
});
