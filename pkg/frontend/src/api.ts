/** Thin HTTP client for the review service. fetch is injected so tests
 * can stub the transport; request bodies use the canonical byte form. */

import { encodeBatch, stableStringify } from "./corrections.js";
import type {
  Correction,
  ExportPayload,
  LayoutPayload,
  OverviewPayload,
  RecommendResponse,
  SessionInfo,
  Side,
  SubmitResponse,
} from "./types.js";

export interface FetchResponseLike {
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<FetchResponseLike>;

export class ServiceError extends Error {
  code: string;
  status: number;
  detail: unknown;

  constructor(status: number, code: string, message: string, detail: unknown = null) {
    super(message);
    this.name = "ServiceError";
    this.status = status;
    this.code = code;
    this.detail = detail;
  }
}

function isErrorBody(body: unknown): body is { code: string; message: string; detail?: unknown } {
  return (
    typeof body === "object" &&
    body !== null &&
    typeof (body as { code?: unknown }).code === "string" &&
    typeof (body as { message?: unknown }).message === "string"
  );
}

export class ApiClient {
  baseUrl: string;
  private fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    const fallback = (globalThis as { fetch?: unknown }).fetch as FetchLike | undefined;
    const chosen = fetchFn ?? fallback;
    if (!chosen) {
      throw new Error("no fetch implementation available");
    }
    this.fetchFn = chosen;
  }

  private async request<T>(method: string, path: string, body?: string): Promise<T> {
    const init: { method: string; headers?: Record<string, string>; body?: string } = {
      method,
    };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = body;
    }
    const response = await this.fetchFn(this.baseUrl + path, init);
    let payload: unknown = null;
    try {
      payload = await response.json();
    } catch {
      payload = null;
    }
    if (response.status >= 400) {
      if (isErrorBody(payload)) {
        throw new ServiceError(
          response.status,
          payload.code,
          payload.message,
          payload.detail ?? null,
        );
      }
      throw new ServiceError(response.status, "unknown_error", `HTTP ${response.status}`);
    }
    return payload as T;
  }

  createSession(bundlePath: string): Promise<SessionInfo> {
    return this.request<SessionInfo>(
      "POST",
      "/sessions",
      stableStringify({ bundle_path: bundlePath }),
    );
  }

  overview(sessionId: string): Promise<OverviewPayload> {
    return this.request<OverviewPayload>("GET", `/sessions/${sessionId}/overview`);
  }

  clusterLayout(sessionId: string, cluster: number, depth = 1): Promise<LayoutPayload> {
    return this.request<LayoutPayload>(
      "GET",
      `/sessions/${sessionId}/clusters/${cluster}/layout?depth=${depth}`,
    );
  }

  neighborhood(sessionId: string, action: number, n = 4): Promise<LayoutPayload> {
    return this.request<LayoutPayload>(
      "GET",
      `/sessions/${sessionId}/actions/${action}/neighborhood?n=${n}`,
    );
  }

  submitCorrections(sessionId: string, corrections: Correction[]): Promise<SubmitResponse> {
    return this.request<SubmitResponse>(
      "POST",
      `/sessions/${sessionId}/corrections`,
      encodeBatch(corrections),
    );
  }

  recommendBoundary(
    sessionId: string,
    action: number,
    side: Side,
    roughFrame: number,
  ): Promise<RecommendResponse> {
    return this.request<RecommendResponse>(
      "POST",
      `/sessions/${sessionId}/recommend_boundary`,
      stableStringify({ action, rough_frame: roughFrame, side }),
    );
  }

  exportAnnotations(sessionId: string): Promise<ExportPayload> {
    return this.request<ExportPayload>("GET", `/sessions/${sessionId}/export`);
  }
}
