/** Confidence-ordered prediction grid.
 *
 * The service is the single source of ordering truth: groups and the
 * specimens inside them are rendered exactly in response order, never
 * re-sorted client-side.  Thumbnail outlines encode prediction
 * confidence.
 */

import type { ConfidenceOrderDto, SpecimenDto } from "./api.js";

export interface GridItem {
  category: string;
  specimen: SpecimenDto;
}

/** Flatten the grouped response preserving service order byte-for-byte. */
export function flattenGroups(payload: ConfidenceOrderDto): GridItem[] {
  const items: GridItem[] = [];
  for (const group of payload.groups) {
    for (const specimen of group.specimens) {
      items.push({ category: group.category, specimen });
    }
  }
  return items;
}

export function orderedIds(payload: ConfidenceOrderDto): string[] {
  return flattenGroups(payload).map((item) => item.specimen.id);
}

/** Outline color by confidence: red (uncertain) through amber to green. */
export function outlineColor(confidence: number): string {
  const t = Math.max(0, Math.min(1, confidence));
  const hue = Math.round(t * 120); // 0 = red, 120 = green
  return `hsl(${hue}, 75%, 45%)`;
}

export interface GridHandlers {
  onSelect(specimen: SpecimenDto): void;
}

export function renderGrid(
  el: HTMLElement,
  payload: ConfidenceOrderDto,
  handlers: GridHandlers,
): void {
  el.textContent = "";
  for (const group of payload.groups) {
    const section = document.createElement("section");
    section.className = "grid-group";
    const heading = document.createElement("h3");
    heading.textContent = `${group.category} (${group.specimens.length})`;
    section.appendChild(heading);
    const row = document.createElement("div");
    row.className = "grid-row";
    for (const specimen of group.specimens) {
      const cell = document.createElement("button");
      cell.className = "grid-cell";
      cell.dataset.id = specimen.id;
      const conf = specimen.prediction?.confidence ?? 0;
      cell.style.borderColor = outlineColor(conf);
      cell.title = `${specimen.id} - confidence ${(conf * 100).toFixed(1)}%`;
      if (specimen.image) {
        const img = document.createElement("img");
        img.src = `/images/${specimen.image.split("/").pop()}`;
        img.alt = specimen.id;
        img.loading = "lazy";
        cell.appendChild(img);
      } else {
        cell.textContent = specimen.id;
      }
      const badge = document.createElement("span");
      badge.className = "badge";
      badge.textContent = specimen.score === null ? "unrated" : `score ${specimen.score}`;
      cell.appendChild(badge);
      cell.addEventListener("click", () => handlers.onSelect(specimen));
      row.appendChild(cell);
    }
    section.appendChild(row);
    el.appendChild(section);
  }
}
