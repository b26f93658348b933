/**
 * Typed client for the /v1 HTTP API.
 *
 * Wire types mirror the server schemas one to one; every number or mask the
 * UI displays comes from these responses, never from client-side inference.
 */

export interface MaskView {
  id: number;
  mask_ref: string;
  png: string; // base64 PNG, 0/255 grayscale, full image size
}

export type Provider = 'connected_components' | 'learned';
export type Scoring = 'global' | 'tokenwise';
export type AlignMode = 'argmax' | 'threshold';
export type Method = 'trans' | 'diff';

export interface SegmentRequest {
  image: string; // base64 PNG
  provider?: Provider;
}

export interface SegmentResponse {
  masks: MaskView[];
  scores: null;
}

export interface AlignRequest {
  image: string;
  prompt: string;
  mode?: AlignMode;
  scoring?: Scoring;
  theta?: number | null;
  provider?: Provider;
}

export interface AlignResponse {
  masks: MaskView[];
  scores: number[];
  selected: number[];
  mode: string;
  scoring: string;
  status: string;
  theta: number | null;
}

export interface ManipulateParams {
  seed: number;
  steps: number;
  guidance: number;
  eta: number;
  temperature: number;
  top_k: number;
  use_gray: boolean;
}

export interface ManipulateRequest {
  image: string;
  text: string;
  method: Method;
  prompt?: string;
  mask_ref?: string;
  scoring?: Scoring;
  params: ManipulateParams;
}

export interface ManipulateAccepted {
  job_id: string;
}

export interface JobResult {
  image: string; // base64 PNG of the edited image
  mask: string; // base64 PNG of the mask actually applied
  mask_ref: string;
  model_hashes: Record<string, string>;
  seed: number;
  method: string;
  params: ManipulateParams;
}

export type JobState = 'queued' | 'running' | 'done' | 'failed';

export interface JobView {
  id: string;
  kind: string;
  state: JobState;
  params: Record<string, unknown>;
  result: JobResult | null;
  error: string | null;
  created: number;
  started: number | null;
  finished: number | null;
}

export interface CountersResponse {
  align_calls: number;
  segment_calls: number;
  manipulate_jobs: number;
}

interface ErrorBody {
  error?: { code?: string; message?: string };
}

/** Structured failure carrying the server's error code and HTTP status. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export const normalizeBaseUrl = (raw: string): string => raw.replace(/\/+$/, '');

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl = '', fetchImpl?: FetchLike) {
    this.baseUrl = normalizeBaseUrl(baseUrl);
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  /** URL serving the stored mask PNG for `ref`; usable as an <img> src. */
  maskUrl(ref: string): string {
    return `${this.baseUrl}/v1/masks/${encodeURIComponent(ref)}`;
  }

  async health(): Promise<{ status: string }> {
    return this.request('GET', '/v1/health');
  }

  async segment(req: SegmentRequest): Promise<SegmentResponse> {
    return this.request('POST', '/v1/segment', req);
  }

  async align(req: AlignRequest): Promise<AlignResponse> {
    return this.request('POST', '/v1/align', req);
  }

  async manipulate(req: ManipulateRequest): Promise<ManipulateAccepted> {
    return this.request('POST', '/v1/manipulate', req);
  }

  async job(jobId: string): Promise<JobView> {
    return this.request('GET', `/v1/jobs/${encodeURIComponent(jobId)}`);
  }

  async counters(): Promise<CountersResponse> {
    return this.request('GET', '/v1/counters');
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { 'Content-Type': 'application/json' };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      throw await toApiError(response);
    }
    return (await response.json()) as T;
  }
}

async function toApiError(response: Response): Promise<ApiError> {
  let body: ErrorBody = {};
  try {
    body = (await response.json()) as ErrorBody;
  } catch {
    // non-JSON error body; fall back to the status line
  }
  const code = body.error?.code ?? `http_${response.status}`;
  const message = body.error?.message ?? response.statusText ?? 'request failed';
  return new ApiError(response.status, code, message);
}
