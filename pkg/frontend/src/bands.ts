/** Score banding shared with the server: 11 integer scores compressed
 * into 6 contiguous equal-width bands, plus the fixed band palette. */

export const N_BANDS = 6;
export const N_SCORES = 11;

/** Perceptually-ordered 6-step palette (dark violet to yellow). */
export const BAND_COLORS = [
  "#440154",
  "#414487",
  "#2a788e",
  "#22a884",
  "#7ad151",
  "#fde725",
] as const;

export function scoreBand(score: number, nBands: number = N_BANDS): number {
  if (score < 0 || score > 10) throw new Error(`score ${score} outside [0, 10]`);
  return Math.min(Math.floor((score * nBands) / N_SCORES), nBands - 1);
}

export function bandEdges(nBands: number = N_BANDS): number[] {
  return Array.from({ length: nBands + 1 }, (_, i) => (i * N_SCORES) / nBands);
}

export function bandColor(score: number): string {
  return BAND_COLORS[scoreBand(score)];
}

/** Stable color per category label, matching legend order. */
export const CATEGORY_COLORS = [
  "#1f77b4",
  "#ff7f0e",
  "#2ca02c",
  "#d62728",
  "#9467bd",
  "#8c564b",
  "#e377c2",
  "#7f7f7f",
  "#bcbd22",
  "#17becf",
] as const;

export function categoryColor(label: string, ordered: string[]): string {
  const idx = ordered.indexOf(label);
  return CATEGORY_COLORS[(idx >= 0 ? idx : ordered.length) % CATEGORY_COLORS.length];
}
