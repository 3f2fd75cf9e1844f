// Typed client for the modalbench HTTP service.

export interface ShapeSummary {
  id: number;
  n_vertices: number;
  vertices: [number, number][];
}

export interface OccupancyResponse {
  id: number;
  resolution: number;
  cells: number[][];
  vertices: [number, number][];
}

export interface MetaResponse {
  material_ranges: Record<string, [number, number]>;
  sample_rate: number;
  n_samples: number;
  sources: string[];
  topology: [number, number];
  n_shapes: number;
}

export interface MaterialBody {
  rho: number;
  youngs: number;
  poisson: number;
  alpha: number;
  beta: number;
}

export type Source = "predictor" | "fit" | "oracle";

export interface SynthesizeRequest {
  shape_id: number;
  material: MaterialBody;
  position: [number, number];
  source: Source;
  topology?: string;
  fit_steps?: number;
  seed?: number;
}

export interface SectionsResponse {
  source: string;
  sections: number[][];
  L: number;
  M: number;
  sample_rate: number;
}

export interface OracleResponse {
  source: "oracle";
  modal: { freqs_hz: number[]; sigmas: number[]; gains: number[] };
  sample_rate: number;
}

export type SynthesizeResponse = SectionsResponse | OracleResponse;

export function isOracleResponse(r: SynthesizeResponse): r is OracleResponse {
  return r.source === "oracle";
}

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function raiseForStatus(res: Response): Promise<void> {
  if (res.ok) return;
  let detail = res.statusText;
  try {
    const body = await res.json();
    detail = body.detail ?? body.message ?? JSON.stringify(body);
  } catch {
    /* non-JSON error body */
  }
  throw new ApiError(res.status, detail);
}

export class Client {
  constructor(private baseUrl: string) {}

  private async getJson<T>(path: string): Promise<T> {
    const res = await fetch(this.baseUrl + path);
    await raiseForStatus(res);
    return res.json();
  }

  meta(): Promise<MetaResponse> {
    return this.getJson("/meta");
  }

  shapes(): Promise<ShapeSummary[]> {
    return this.getJson("/shapes");
  }

  occupancy(shapeId: number): Promise<OccupancyResponse> {
    return this.getJson(`/shapes/${shapeId}/occupancy`);
  }

  async synthesize(req: SynthesizeRequest): Promise<SynthesizeResponse> {
    const res = await fetch(this.baseUrl + "/synthesize", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
    await raiseForStatus(res);
    return res.json();
  }

  async renderWav(req: SynthesizeRequest, excitation: "impulse" = "impulse"): Promise<ArrayBuffer> {
    const res = await fetch(this.baseUrl + "/render", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ ...req, excitation }),
    });
    await raiseForStatus(res);
    return res.arrayBuffer();
  }
}
