// Typed client for the shape-transformation service. The transport is
// injectable so tests can run against a scripted fake.

import type {
  ControlPoint,
  EditResponse,
  GalleryResponse,
  RetrieveResult,
  ServiceError,
  TransformResponse,
} from "./types.js";

export type Transport = (
  path: string,
  init?: { method?: string; body?: string },
) => Promise<{ status: number; json(): Promise<unknown> }>;

export class ApiError extends Error {
  constructor(public status: number, public detail: ServiceError) {
    super(`${detail.code}: ${detail.message}`);
  }
}

export class Client {
  constructor(
    private baseUrl: string = "",
    private transport: Transport = (path, init) => fetch(this.baseUrl + path, {
      ...init,
      headers: { "Content-Type": "application/json" },
    }),
  ) {}

  private async request<T>(path: string, body?: unknown): Promise<T> {
    const response = await this.transport(path, body === undefined
      ? undefined
      : { method: "POST", body: JSON.stringify(body) });
    const payload = (await response.json()) as Record<string, unknown>;
    if (response.status >= 400) {
      const detail = (payload.error ?? {
        code: "unknown",
        message: `HTTP ${response.status}`,
      }) as ServiceError;
      throw new ApiError(response.status, detail);
    }
    return payload as T;
  }

  health(): Promise<{ status: string; index_size: number }> {
    return this.request("/health");
  }

  async retrieve(labelsPng: string, k = 5): Promise<RetrieveResult[]> {
    const body = { labels_png: labelsPng, k };
    const out = await this.request<{ results: RetrieveResult[] }>("/retrieve", body);
    return out.results;
  }

  transform(
    photoPng: string,
    photoLabelsPng: string,
    cariLabelsPng: string,
  ): Promise<TransformResponse> {
    return this.request("/transform", {
      photo_png: photoPng,
      photo_labels_png: photoLabelsPng,
      cari_labels_png: cariLabelsPng,
    });
  }

  interpolate(
    photoPng: string,
    photoLabelsPng: string,
    refA: string,
    refB: string,
    t: number,
  ): Promise<TransformResponse> {
    return this.request("/interpolate", {
      photo_png: photoPng,
      photo_labels_png: photoLabelsPng,
      ref_a_labels_png: refA,
      ref_b_labels_png: refB,
      t,
    });
  }

  edit(labelsPng: string, controls: ControlPoint[]): Promise<EditResponse> {
    return this.request("/edit", { labels_png: labelsPng, controls });
  }

  gallery(recordId: string): Promise<GalleryResponse> {
    return this.request(`/gallery/${recordId}`);
  }
}
