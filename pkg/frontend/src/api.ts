import type { CartographyReport, ExportResult, Preview, ScoreAxis } from "./types.js";

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin client for the local report server.
 *
 * Preview requests are latest-wins: starting a new one aborts the previous
 * in-flight request, so a fast slider drag cannot deliver stale counts.
 */
export class ApiClient {
  private previewController: AbortController | null = null;

  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async report(): Promise<CartographyReport> {
    const resp = await this.fetchFn(`${this.base}/api/report`);
    return this.unwrap<CartographyReport>(resp);
  }

  /** Resolves to null when superseded by a newer preview request. */
  async preview(score: ScoreAxis, threshold: number | "auto"): Promise<Preview | null> {
    this.previewController?.abort();
    const controller = new AbortController();
    this.previewController = controller;
    const params = new URLSearchParams({ score, threshold: String(threshold) });
    try {
      const resp = await this.fetchFn(`${this.base}/api/preview?${params}`, {
        signal: controller.signal,
      });
      return await this.unwrap<Preview>(resp);
    } catch (err) {
      if (controller.signal.aborted) return null;
      throw err;
    } finally {
      if (this.previewController === controller) this.previewController = null;
    }
  }

  async export(score: ScoreAxis, threshold: number): Promise<ExportResult> {
    const resp = await this.fetchFn(`${this.base}/api/export`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ score, threshold }),
    });
    return this.unwrap<ExportResult>(resp);
  }

  private async unwrap<T>(resp: Response): Promise<T> {
    const body = await resp.json();
    if (!resp.ok) {
      const message = (body as { error?: string; detail?: string }).error
        ?? (body as { detail?: string }).detail
        ?? `request failed with status ${resp.status}`;
      throw new Error(message);
    }
    return body as T;
  }
}
