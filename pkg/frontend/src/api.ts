// Typed client for the review service. Every request is appended to an
// audit log so tests can assert "exactly one call per mutation".

import type {
  FlagsResponse,
  FlagStatus,
  ImpactResponse,
  LayersResponse,
  QueryResponse,
  ResolveResponse,
  UpdateResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export interface AuditEntry {
  method: string;
  path: string;
  status: number;
}

export interface QueryBody {
  region: unknown;
  layer_kinds: string[];
  predicate?: "within" | "crosses" | "intersects";
  interval?: [string, string];
}

export class ApiClient {
  readonly audit: AuditEntry[] = [];

  constructor(
    private baseUrl: string,
    private token: string,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  setToken(token: string): void {
    this.token = token;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["X-Session-Token"] = this.token;
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      this.audit.push({ method, path, status: 0 });
      throw new ApiError(0, `network failure: ${String(err)}`);
    }
    this.audit.push({ method, path, status: response.status });
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      const message =
        typeof payload === "object" && payload !== null && "error" in payload
          ? String((payload as { error: unknown }).error)
          : `HTTP ${response.status}`;
      throw new ApiError(response.status, message);
    }
    return payload as T;
  }

  callCount(method: string, pathPrefix: string): number {
    return this.audit.filter((e) => e.method === method && e.path.startsWith(pathPrefix)).length;
  }

  health(): Promise<{ status: string; revision: number }> {
    return this.request("GET", "/health");
  }

  layers(): Promise<LayersResponse> {
    return this.request("GET", "/layers");
  }

  query(body: QueryBody): Promise<QueryResponse> {
    return this.request("POST", "/query", body);
  }

  impact(edgeId: string, censusLayer: string, attributeKey: string): Promise<ImpactResponse> {
    return this.request("POST", "/query", {
      impact: { edge_id: edgeId, census_layer: censusLayer, attribute_key: attributeKey },
    });
  }

  flags(filter?: { status?: string; rule?: string; layer?: string }): Promise<FlagsResponse> {
    const params = new URLSearchParams();
    if (filter?.status) params.set("status", filter.status);
    if (filter?.rule) params.set("rule", filter.rule);
    if (filter?.layer) params.set("layer", filter.layer);
    const qs = params.toString();
    return this.request("GET", qs ? `/flags?${qs}` : "/flags");
  }

  resolveFlag(flagId: string, decision: "accepted" | "rejected"): Promise<ResolveResponse> {
    return this.request("POST", `/flags/${flagId}/resolve`, { decision });
  }

  update(actions: Record<string, unknown>[]): Promise<UpdateResponse> {
    return this.request("POST", "/update", { actions });
  }
}
