export interface LinearScale {
  (value: number): number;
  invert(pixel: number): number;
}

export function linearScale(
  domain: [number, number],
  range: [number, number],
): LinearScale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  const scale = ((value: number) => r0 + ((value - d0) / span) * (r1 - r0)) as LinearScale;
  scale.invert = (pixel: number) => d0 + ((pixel - r0) / ((r1 - r0) || 1)) * span;
  return scale;
}

// compact viridis-style ramp, interpolated between fixed stops
const RAMP: Array<[number, number, number]> = [
  [68, 1, 84],
  [59, 82, 139],
  [33, 145, 140],
  [94, 201, 98],
  [253, 231, 37],
];

/** Map a [0, 1] value to an rgb() colour along the ramp. */
export function correctnessColor(value: number): string {
  const v = Math.min(1, Math.max(0, value));
  const pos = v * (RAMP.length - 1);
  const lo = Math.floor(pos);
  const hi = Math.min(RAMP.length - 1, lo + 1);
  const t = pos - lo;
  const channel = (i: number) => Math.round(RAMP[lo][i] + t * (RAMP[hi][i] - RAMP[lo][i]));
  return `rgb(${channel(0)},${channel(1)},${channel(2)})`;
}
