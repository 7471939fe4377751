/** Cross-section map explorer: renders the category/score grid returned
 * by the service, and turns a cell click into that cell's composed
 * genotype, a toy render + prediction via the pinned-proposal endpoint,
 * and an "add to rating queue" offer. */

import type { Api, MapDto, ProposalDto } from "./api.js";
import { categoryColor } from "./bands.js";

/** Genotype at a map cell: base with the two swept dims substituted.
 * Mirrors the server's grid convention (linspace over clipped ranges). */
export function cellGenotype(map: MapDto, ix: number, iy: number): number[] {
  const [nx, ny] = map.resolution;
  const [[xLo, xHi], [yLo, yHi]] = map.ranges;
  const g = [...map.base];
  g[map.dim_x] = xLo + (xHi - xLo) * (nx > 1 ? ix / (nx - 1) : 0);
  g[map.dim_y] = yLo + (yHi - yLo) * (ny > 1 ? iy / (ny - 1) : 0);
  return g;
}

/** Categories actually present in the map, for the legend. */
export function mapLegend(map: MapDto): string[] {
  if (!map.labels) return [];
  const seen = new Set<string>();
  for (const row of map.labels) for (const label of row) seen.add(label);
  return [...seen].sort();
}

export function cellColor(map: MapDto, ix: number, iy: number, legend: string[]): string {
  if (map.target === "category" && map.labels) {
    return categoryColor(map.labels[iy][ix], legend);
  }
  if (map.scores) {
    const flat = map.scores.flat();
    const lo = Math.min(...flat);
    const hi = Math.max(...flat);
    const t = hi > lo ? (map.scores[iy][ix] - lo) / (hi - lo) : 0.5;
    const r = Math.round(255 * t);
    const b = Math.round(255 * (1 - t));
    return `rgb(${r}, 60, ${b})`;
  }
  return "#333";
}

export interface MapHandlers {
  onProposal(proposal: ProposalDto): void;
  onError(message: string): void;
}

export function renderMap(
  el: HTMLElement,
  api: Api,
  map: MapDto,
  handlers: MapHandlers,
): void {
  el.textContent = "";
  const legend = mapLegend(map);
  const [nx, ny] = map.resolution;
  const grid = document.createElement("div");
  grid.className = "map-grid";
  grid.style.gridTemplateColumns = `repeat(${nx}, 1fr)`;
  for (let iy = ny - 1; iy >= 0; iy--) {
    for (let ix = 0; ix < nx; ix++) {
      const cell = document.createElement("button");
      cell.className = "map-cell";
      cell.style.background = cellColor(map, ix, iy, legend);
      const label =
        map.target === "category" && map.labels
          ? map.labels[iy][ix]
          : map.scores
            ? map.scores[iy][ix].toFixed(2)
            : "";
      cell.title = `(${ix}, ${iy}) ${label}`;
      cell.addEventListener("click", async () => {
        try {
          const res = await api.proposePinned(cellGenotype(map, ix, iy), "map-cell");
          handlers.onProposal(res.proposals[0]);
        } catch (err) {
          handlers.onError(err instanceof Error ? err.message : String(err));
        }
      });
      grid.appendChild(cell);
    }
  }
  el.appendChild(grid);
  if (legend.length) {
    const legendEl = document.createElement("div");
    legendEl.className = "map-legend";
    for (const label of legend) {
      const chip = document.createElement("span");
      chip.className = "chip";
      chip.style.background = categoryColor(label, legend);
      chip.textContent = label;
      legendEl.appendChild(chip);
    }
    el.appendChild(legendEl);
  }
}
