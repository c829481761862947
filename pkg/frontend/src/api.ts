/** Typed client for the generation service. */

export interface LegendEntry {
  class_id: number;
  name: string;
  control_color: [number, number, number];
  default_pen_width: number;
}

export interface StyleDescriptor {
  id: string;
  display_name: string;
  prompt: string;
  tile_size: number;
  legend: LegendEntry[];
}

export interface JobStatus {
  job_id: string;
  state: "queued" | "running" | "done" | "failed";
  done: number;
  total: number;
  error: string | null;
  download: string | null;
}

export interface GenerateOptions {
  seed?: number;
  postproc?: boolean;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: unknown,
  ) {
    super(typeof detail === "string" ? detail : JSON.stringify(detail));
  }
}

type FetchLike = typeof fetch;

async function raise(res: Response): Promise<never> {
  let detail: unknown;
  try {
    detail = ((await res.json()) as { detail?: unknown }).detail ?? "request failed";
  } catch {
    detail = res.statusText;
  }
  throw new ApiError(res.status, detail);
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = fetch,
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const res = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!res.ok) await raise(res);
    return (await res.json()) as T;
  }

  health(): Promise<{ status: string; model_loaded: boolean }> {
    return this.getJson("/healthz");
  }

  listStyles(): Promise<StyleDescriptor[]> {
    return this.getJson("/styles");
  }

  async generate(
    controlPng: Uint8Array,
    styleId: string,
    opts: GenerateOptions = {},
  ): Promise<{ png: Uint8Array; seed: number }> {
    const form = new FormData();
    form.append("control", new Blob([controlPng as BlobPart], { type: "image/png" }), "control.png");
    form.append("style_id", styleId);
    if (opts.seed !== undefined) form.append("seed", String(opts.seed));
    if (opts.postproc) form.append("postproc", "true");
    const res = await this.fetchFn(`${this.baseUrl}/generate`, { method: "POST", body: form });
    if (!res.ok) await raise(res);
    const png = new Uint8Array(await res.arrayBuffer());
    return { png, seed: Number(res.headers.get("X-Seed") ?? -1) };
  }

  async createJob(
    controlPngs: Uint8Array[],
    styleId: string,
    opts: GenerateOptions & { cols?: number } = {},
  ): Promise<JobStatus> {
    const form = new FormData();
    for (let i = 0; i < controlPngs.length; i++) {
      form.append("controls", new Blob([controlPngs[i] as BlobPart], { type: "image/png" }), `c${i}.png`);
    }
    form.append("style_id", styleId);
    if (opts.seed !== undefined) form.append("seed", String(opts.seed));
    if (opts.postproc) form.append("postproc", "true");
    if (opts.cols !== undefined) form.append("cols", String(opts.cols));
    const res = await this.fetchFn(`${this.baseUrl}/jobs`, { method: "POST", body: form });
    if (!res.ok) await raise(res);
    return (await res.json()) as JobStatus;
  }

  getJob(jobId: string): Promise<JobStatus> {
    return this.getJson(`/jobs/${jobId}`);
  }

  async downloadJob(jobId: string): Promise<Uint8Array> {
    const res = await this.fetchFn(`${this.baseUrl}/jobs/${jobId}/download`);
    if (!res.ok) await raise(res);
    return new Uint8Array(await res.arrayBuffer());
  }
}
