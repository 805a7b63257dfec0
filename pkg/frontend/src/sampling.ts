import type { CartographyPoint } from "./types.js";

export const RENDER_LIMIT = 20_000;
export const SAMPLE_SIZE = 5_000;

export interface RenderSample {
  points: CartographyPoint[];
  sampled: boolean;
}

/** Uniform deterministic downsample for rendering only.
 *
 * Above RENDER_LIMIT points, an even stride keeps SAMPLE_SIZE of them and
 * the caller shows a "rendering sample" badge; preview counts always come
 * from the server over the full dataset.
 */
export function renderSample(points: CartographyPoint[]): RenderSample {
  if (points.length <= RENDER_LIMIT) {
    return { points, sampled: false };
  }
  const stride = points.length / SAMPLE_SIZE;
  const sampled: CartographyPoint[] = [];
  for (let i = 0; i < SAMPLE_SIZE; i++) {
    sampled.push(points[Math.floor(i * stride)]);
  }
  return { points: sampled, sampled: true };
}
