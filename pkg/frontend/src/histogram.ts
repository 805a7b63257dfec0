import { linearScale } from "./scales.js";

export const HISTOGRAM_BINS = 50;

/** Counts over 50 equal bins of [0, 1]; the last bin includes 1.0. */
export function binCounts(values: number[], bins: number = HISTOGRAM_BINS): number[] {
  const counts = new Array<number>(bins).fill(0);
  for (const v of values) {
    if (v < 0 || v > 1 || Number.isNaN(v)) continue;
    const idx = v >= 1 ? bins - 1 : Math.floor(v * bins);
    counts[idx] += 1;
  }
  return counts;
}

export interface HistogramView {
  setValues(values: number[]): void;
  setThreshold(value: number | null): void;
  destroy(): void;
}

/** Canvas histogram with a draggable vertical threshold line. */
export function createHistogram(
  canvas: HTMLCanvasElement,
  onDrag: (value: number) => void,
  onDragEnd: (value: number) => void,
): HistogramView {
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("canvas 2d context unavailable");
  let values: number[] = [];
  let counts: number[] = [];
  let threshold: number | null = null;
  let dragging = false;

  const pad = { left: 10, right: 10, top: 8, bottom: 8 };
  const x = () => linearScale([0, 1], [pad.left, canvas.width - pad.right]);

  function draw(): void {
    ctx!.clearRect(0, 0, canvas.width, canvas.height);
    const xs = x();
    const innerH = canvas.height - pad.top - pad.bottom;
    const max = Math.max(1, ...counts);
    const barW = (canvas.width - pad.left - pad.right) / counts.length;
    ctx!.fillStyle = "#7aa6c2";
    counts.forEach((count, i) => {
      const h = (count / max) * innerH;
      ctx!.fillRect(xs(i / counts.length), canvas.height - pad.bottom - h,
        Math.max(1, barW - 1), h);
    });
    if (threshold !== null) {
      const px = xs(threshold);
      ctx!.strokeStyle = "#d64541";
      ctx!.lineWidth = 2;
      ctx!.beginPath();
      ctx!.moveTo(px, pad.top);
      ctx!.lineTo(px, canvas.height - pad.bottom);
      ctx!.stroke();
    }
  }

  function valueAt(event: PointerEvent): number {
    const rect = canvas.getBoundingClientRect();
    const px = ((event.clientX - rect.left) / rect.width) * canvas.width;
    return Math.min(1, Math.max(0, x().invert(px)));
  }

  const down = (event: PointerEvent) => {
    dragging = true;
    canvas.setPointerCapture(event.pointerId);
    onDrag(valueAt(event));
  };
  const move = (event: PointerEvent) => {
    if (dragging) onDrag(valueAt(event));
  };
  const up = (event: PointerEvent) => {
    if (!dragging) return;
    dragging = false;
    onDragEnd(valueAt(event));
  };
  canvas.addEventListener("pointerdown", down);
  canvas.addEventListener("pointermove", move);
  canvas.addEventListener("pointerup", up);

  return {
    setValues(next: number[]): void {
      values = next;
      counts = binCounts(values);
      draw();
    },
    setThreshold(value: number | null): void {
      threshold = value;
      draw();
    },
    destroy(): void {
      canvas.removeEventListener("pointerdown", down);
      canvas.removeEventListener("pointermove", move);
      canvas.removeEventListener("pointerup", up);
    },
  };
}
