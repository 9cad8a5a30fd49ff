// Typed client for the platesearch JSON API. The fetch implementation is
// injectable so tests can run against a recorded fake.

export interface BoxJson {
  left: number;
  top: number;
  width: number;
  height: number;
}

export interface ResultItem {
  element_id: string;
  score: number;
  page_urn: string | null;
  box: BoxJson | null;
  iiif_url: string | null;
  predicted_label: string | null;
}

export interface SearchResponse {
  results: ResultItem[];
  model: string;
  took_ms: number;
}

export interface ElementInfo {
  element_id: string;
  page_urn: string | null;
  box: BoxJson | null;
  iiif_url: string | null;
  predicted_label: string | null;
  context_text: string;
}

export interface IndexInfo {
  size: number;
  dim: number;
  params: Record<string, number>;
}

export interface HealthResponse {
  status: string;
  counts: { elements: number; text_documents: number };
  models: string[];
  default_model: string;
  indexes: Record<string, IndexInfo>;
  classifier: { loaded: boolean; feature_tag: string | null };
  assumptions: Record<string, unknown>;
}

/** Error payloads always carry {code, message, detail}. */
export class ServiceError extends Error {
  readonly code: number;
  readonly detail: string;

  constructor(code: number, message: string, detail: string) {
    super(message);
    this.name = 'ServiceError';
    this.code = code;
    this.detail = detail;
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** The slice of the API a search session needs; ApiClient implements it. */
export interface SearchApi {
  searchText(q: string, k: number, model?: string): Promise<SearchResponse>;
  similar(elementId: string, k: number, model?: string): Promise<SearchResponse>;
  searchImage(image: Blob, k: number, model?: string): Promise<SearchResponse>;
}

async function asJson<T>(response: Response): Promise<T> {
  if (response.ok) {
    return (await response.json()) as T;
  }
  let code = response.status;
  let message = response.statusText || 'request failed';
  let detail = '';
  try {
    const body = (await response.json()) as Partial<Record<string, unknown>>;
    if (typeof body.code === 'number') code = body.code;
    if (typeof body.message === 'string') message = body.message;
    if (typeof body.detail === 'string') detail = body.detail;
  } catch {
    // non-JSON error body; keep the HTTP status line
  }
  throw new ServiceError(code, message, detail);
}

export class ApiClient {
  constructor(
    readonly baseUrl: string = '',
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private url(path: string, params?: Record<string, string | number | undefined>): string {
    const query = new URLSearchParams();
    for (const [key, value] of Object.entries(params ?? {})) {
      if (value !== undefined) query.set(key, String(value));
    }
    const qs = query.toString();
    return this.baseUrl + path + (qs ? `?${qs}` : '');
  }

  health(): Promise<HealthResponse> {
    return this.fetchFn(this.url('/health')).then((r) => asJson<HealthResponse>(r));
  }

  element(elementId: string): Promise<ElementInfo> {
    return this.fetchFn(this.url(`/elements/${encodeURIComponent(elementId)}`)).then((r) =>
      asJson<ElementInfo>(r),
    );
  }

  similar(elementId: string, k: number, model?: string): Promise<SearchResponse> {
    const path = `/similar/${encodeURIComponent(elementId)}`;
    return this.fetchFn(this.url(path, { k, model })).then((r) => asJson<SearchResponse>(r));
  }

  // The text route ranks by context text alone, but the model tag rides
  // along so a later tag switch is visible in the request log either way.
  searchText(q: string, k: number, model?: string): Promise<SearchResponse> {
    return this.fetchFn(this.url('/search/text', { q, k, model })).then((r) =>
      asJson<SearchResponse>(r),
    );
  }

  searchImage(image: Blob, k: number, model?: string): Promise<SearchResponse> {
    const form = new FormData();
    form.append('image', image, 'query.jpg');
    return this.fetchFn(this.url('/search/image', { k, model }), {
      method: 'POST',
      body: form,
    }).then((r) => asJson<SearchResponse>(r));
  }
}
