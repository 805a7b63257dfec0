import type { CartographyReport, Preview, ScoreAxis } from "./types.js";

export const THRESHOLD_RESOLUTION = 1e-3;

/** Clamp to [0, 1] and snap to the slider's 1e-3 grid. */
export function snapThreshold(value: number): number {
  const clamped = Math.min(1, Math.max(0, value));
  return Math.round(clamped / THRESHOLD_RESOLUTION) * THRESHOLD_RESOLUTION;
}

export function availableAxes(report: CartographyReport): ScoreAxis[] {
  const hasWeights = report.points.every((p) => typeof p.weight === "number");
  return hasWeights ? ["product", "weight"] : ["product"];
}

export function axisValues(report: CartographyReport, axis: ScoreAxis): number[] {
  if (axis === "weight") return report.points.map((p) => p.weight ?? 0);
  return report.points.map((p) => p.product);
}

export interface ExplorerState {
  axis: ScoreAxis;
  /** null means "auto": the server resolves the valley threshold. */
  threshold: number | null;
  preview: Preview | null;
}

/** View model for the threshold explorer.
 *
 * Holds no flag arithmetic of its own: previews always come verbatim from
 * the server, and switching the score axis resets the threshold to auto.
 */
export class ThresholdExplorer {
  private state: ExplorerState;

  constructor(private readonly report: CartographyReport) {
    const axes = availableAxes(report);
    this.state = { axis: axes[axes.length - 1], threshold: null, preview: null };
  }

  get axis(): ScoreAxis {
    return this.state.axis;
  }

  get axes(): ScoreAxis[] {
    return availableAxes(this.report);
  }

  /** Threshold to request: a snapped number, or "auto" when unset. */
  get requestThreshold(): number | "auto" {
    return this.state.threshold === null ? "auto" : this.state.threshold;
  }

  /** Threshold to draw: explicit value, else the server-resolved auto value. */
  get effectiveThreshold(): number | null {
    if (this.state.threshold !== null) return this.state.threshold;
    return this.state.preview?.threshold ?? null;
  }

  get preview(): Preview | null {
    return this.state.preview;
  }

  setAxis(axis: ScoreAxis): boolean {
    if (!this.axes.includes(axis)) return false;
    if (axis === this.state.axis) return false;
    this.state = { axis, threshold: null, preview: null };
    return true;
  }

  setThreshold(value: number): number {
    const snapped = snapThreshold(value);
    this.state.threshold = snapped;
    return snapped;
  }

  resetToAuto(): void {
    this.state.threshold = null;
  }

  applyPreview(preview: Preview | null): void {
    // stale responses (wrong axis) and aborted requests are dropped
    if (preview === null) return;
    if (preview.score !== this.state.axis) return;
    this.state.preview = preview;
  }
}
