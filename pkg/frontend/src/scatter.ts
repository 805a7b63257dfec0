import { correctnessColor, linearScale } from "./scales.js";
import type { CartographyPoint, ScoreAxis } from "./types.js";

export interface HoverHit {
  point: CartographyPoint;
  px: number;
  py: number;
}

/** Nearest point within `radius` pixels of (px, py), by squared distance. */
export function hitTest(
  positions: Float64Array,
  points: CartographyPoint[],
  px: number,
  py: number,
  radius: number = 8,
): HoverHit | null {
  let best = radius * radius;
  let hit: HoverHit | null = null;
  for (let i = 0; i < points.length; i++) {
    const dx = positions[2 * i] - px;
    const dy = positions[2 * i + 1] - py;
    const d2 = dx * dx + dy * dy;
    if (d2 <= best) {
      best = d2;
      hit = { point: points[i], px: positions[2 * i], py: positions[2 * i + 1] };
    }
  }
  return hit;
}

export interface ScatterView {
  setPoints(points: CartographyPoint[]): void;
  setFlagPredicate(flagged: (p: CartographyPoint) => boolean): void;
  destroy(): void;
}

/** Variability-confidence map: x sigma, y mu, colour correctness.
 *
 * Flagged points are re-drawn with a red ring; hovering shows the full
 * metric tuple for the nearest mark.
 */
export function createScatter(
  canvas: HTMLCanvasElement,
  tooltip: HTMLElement,
  axisFor: () => ScoreAxis,
): ScatterView {
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("canvas 2d context unavailable");
  let points: CartographyPoint[] = [];
  let positions = new Float64Array(0);
  let isFlagged: (p: CartographyPoint) => boolean = () => false;

  const pad = { left: 34, right: 10, top: 10, bottom: 26 };

  function draw(): void {
    ctx!.clearRect(0, 0, canvas.width, canvas.height);
    const xs = linearScale([0, 0.5], [pad.left, canvas.width - pad.right]);
    const ys = linearScale([0, 1], [canvas.height - pad.bottom, pad.top]);

    ctx!.strokeStyle = "#ccc";
    ctx!.lineWidth = 1;
    ctx!.strokeRect(pad.left, pad.top, canvas.width - pad.left - pad.right,
      canvas.height - pad.top - pad.bottom);
    ctx!.fillStyle = "#555";
    ctx!.font = "11px sans-serif";
    ctx!.fillText("variability", canvas.width / 2 - 24, canvas.height - 8);
    ctx!.save();
    ctx!.translate(12, canvas.height / 2 + 28);
    ctx!.rotate(-Math.PI / 2);
    ctx!.fillText("confidence", 0, 0);
    ctx!.restore();

    positions = new Float64Array(points.length * 2);
    points.forEach((p, i) => {
      const px = xs(Math.min(0.5, p.sigma));
      const py = ys(p.mu);
      positions[2 * i] = px;
      positions[2 * i + 1] = py;
      ctx!.fillStyle = correctnessColor(p.correctness);
      ctx!.beginPath();
      ctx!.arc(px, py, 2.2, 0, 2 * Math.PI);
      ctx!.fill();
    });
    points.forEach((p, i) => {
      if (!isFlagged(p)) return;
      ctx!.strokeStyle = "#d64541";
      ctx!.lineWidth = 1.4;
      ctx!.beginPath();
      ctx!.arc(positions[2 * i], positions[2 * i + 1], 3.6, 0, 2 * Math.PI);
      ctx!.stroke();
    });
  }

  const onMove = (event: PointerEvent) => {
    const rect = canvas.getBoundingClientRect();
    const px = ((event.clientX - rect.left) / rect.width) * canvas.width;
    const py = ((event.clientY - rect.top) / rect.height) * canvas.height;
    const hit = hitTest(positions, points, px, py);
    if (!hit) {
      tooltip.style.display = "none";
      return;
    }
    const p = hit.point;
    const axis = axisFor();
    const weight = p.weight === undefined ? "" : ` w=${p.weight.toFixed(3)}`;
    tooltip.textContent =
      `#${p.id} label=${p.label} μ=${p.mu.toFixed(3)} σ=${p.sigma.toFixed(3)} ` +
      `c=${p.correctness.toFixed(2)} m=${p.product.toFixed(3)}${weight} [${axis}]`;
    tooltip.style.display = "block";
    tooltip.style.left = `${event.clientX + 12}px`;
    tooltip.style.top = `${event.clientY + 12}px`;
  };
  const onLeave = () => {
    tooltip.style.display = "none";
  };
  canvas.addEventListener("pointermove", onMove);
  canvas.addEventListener("pointerleave", onLeave);

  return {
    setPoints(next: CartographyPoint[]): void {
      points = next;
      draw();
    },
    setFlagPredicate(flagged: (p: CartographyPoint) => boolean): void {
      isFlagged = flagged;
      draw();
    },
    destroy(): void {
      canvas.removeEventListener("pointermove", onMove);
      canvas.removeEventListener("pointerleave", onLeave);
    },
  };
}
