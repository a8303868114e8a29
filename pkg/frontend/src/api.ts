// Typed client for the engine's HTTP/JSON service. Response payloads are
// passed through as received (plus base64 decoding for pixel buffers); every
// displayed guidance number originates here, not from client-side math.

export interface PoseJson {
  q: number[];
  delta: number[];
}

export interface StandardPlaneJson {
  id: string;
  q_pos: number[];
  q_neg: number[];
  delta_sp: number[];
}

export interface VolumeInfo {
  name: string;
  dims: number[];
  standard_planes: StandardPlaneJson[];
}

export interface SlicePayload {
  width: number;
  height: number;
  pixels: Uint8Array;
}

export interface Guidance {
  target_sp: string;
  axis: number[];
  angle: number; // radians, straight from the service
  translation: number[];
  chosen_direction: string;
}

export interface RegisterResult {
  pose: PoseJson;
  score: number;
  degenerate: boolean;
  candidates: number[];
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

function b64ToBytes(encoded: string): Uint8Array {
  const raw = atob(encoded);
  const out = new Uint8Array(raw.length);
  for (let i = 0; i < raw.length; i++) out[i] = raw.charCodeAt(i);
  return out;
}

function bytesToB64(bytes: Uint8Array): string {
  let raw = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    raw += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(raw);
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class Client {
  constructor(
    private base = "",
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async call(path: string, body?: unknown): Promise<any> {
    const init: RequestInit =
      body === undefined
        ? { method: "GET" }
        : {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(body),
          };
    const resp = await this.fetchFn(this.base + path, init);
    const payload = await resp.json();
    if (!resp.ok) {
      throw new ApiError(resp.status, payload.error ?? `request failed (${resp.status})`);
    }
    return payload;
  }

  async volume(): Promise<VolumeInfo> {
    return this.call("/api/volume");
  }

  async slice(pose: PoseJson, width: number, height: number): Promise<SlicePayload> {
    const payload = await this.call("/api/slice", { pose, width, height });
    return {
      width: payload.width,
      height: payload.height,
      pixels: b64ToBytes(payload.pixels_b64),
    };
  }

  async guidance(pose: PoseJson, spId: string): Promise<Guidance> {
    return this.call("/api/guidance", { pose, sp_id: spId });
  }

  async register(pixels: Uint8Array, width: number, height: number): Promise<RegisterResult> {
    return this.call("/api/register", {
      pixels_b64: bytesToB64(pixels),
      width,
      height,
    });
  }
}
