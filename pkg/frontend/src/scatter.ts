/** Embedding scatter: pan/zoom canvas, color by category or score band,
 * lasso selection seeding mutation/crossover proposal batches.
 *
 * The staleness flag compares the embedding's per-point annotations
 * against the current specimen state: any divergence means the ledger
 * advanced past the embedding snapshot.
 */

import type { EmbeddingDto, SpecimenDto } from "./api.js";
import { bandColor, categoryColor } from "./bands.js";

export interface Camera {
  x: number; // world coords of canvas centre
  y: number;
  scale: number; // pixels per world unit
}

export function fitCamera(points: [number, number][], width: number, height: number): Camera {
  if (!points.length) return { x: 0, y: 0, scale: 1 };
  const xs = points.map((p) => p[0]);
  const ys = points.map((p) => p[1]);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const yMin = Math.min(...ys);
  const yMax = Math.max(...ys);
  const spanX = xMax - xMin || 1;
  const spanY = yMax - yMin || 1;
  return {
    x: (xMin + xMax) / 2,
    y: (yMin + yMax) / 2,
    scale: 0.9 * Math.min(width / spanX, height / spanY),
  };
}

export function worldToScreen(camera: Camera, width: number, height: number, p: [number, number]): [number, number] {
  return [
    width / 2 + (p[0] - camera.x) * camera.scale,
    height / 2 - (p[1] - camera.y) * camera.scale,
  ];
}

/** Ray-casting point-in-polygon; polygon in screen coordinates. */
export function pointInPolygon(point: [number, number], polygon: [number, number][]): boolean {
  if (polygon.length < 3) return false;
  const [px, py] = point;
  let inside = false;
  for (let i = 0, j = polygon.length - 1; i < polygon.length; j = i++) {
    const [xi, yi] = polygon[i];
    const [xj, yj] = polygon[j];
    const crosses = yi > py !== yj > py && px < ((xj - xi) * (py - yi)) / (yj - yi) + xi;
    if (crosses) inside = !inside;
  }
  return inside;
}

/** Ids of embedding points whose screen position falls inside the lasso. */
export function lassoSelect(
  embedding: EmbeddingDto,
  camera: Camera,
  width: number,
  height: number,
  lasso: [number, number][],
): string[] {
  const selected: string[] = [];
  embedding.points.forEach((p, i) => {
    if (pointInPolygon(worldToScreen(camera, width, height, p), lasso)) {
      selected.push(embedding.ids[i]);
    }
  });
  return selected;
}

/** True when any specimen's current evaluation differs from the
 * annotation frozen into the embedding snapshot. */
export function embeddingIsStale(
  embedding: EmbeddingDto,
  specimens: Map<string, SpecimenDto>,
): boolean {
  return embedding.ids.some((id, i) => {
    const current = specimens.get(id);
    if (!current) return false;
    const frozenCategory = embedding.categories?.[i] ?? null;
    const frozenScore = embedding.scores?.[i] ?? null;
    return current.category !== frozenCategory || current.score !== frozenScore;
  });
}

export type ColorMode = "category" | "band";

export function pointColor(
  embedding: EmbeddingDto,
  index: number,
  mode: ColorMode,
  orderedCategories: string[],
): string {
  if (mode === "band") {
    const score = embedding.scores?.[index];
    return score === null || score === undefined ? "#555" : bandColor(score);
  }
  const category = embedding.categories?.[index];
  return category ? categoryColor(category, orderedCategories) : "#555";
}

export class ScatterView {
  camera: Camera;
  colorMode: ColorMode = "category";
  lasso: [number, number][] = [];
  private dragging = false;
  private lassoing = false;

  constructor(
    private canvas: HTMLCanvasElement,
    public embedding: EmbeddingDto,
    private onLasso: (ids: string[]) => void,
  ) {
    this.camera = fitCamera(embedding.points, canvas.width, canvas.height);
    canvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      const factor = e.deltaY < 0 ? 1.15 : 1 / 1.15;
      this.camera.scale *= factor;
      this.draw();
    });
    canvas.addEventListener("mousedown", (e) => {
      if (e.shiftKey) {
        this.lassoing = true;
        this.lasso = [[e.offsetX, e.offsetY]];
      } else {
        this.dragging = true;
      }
    });
    canvas.addEventListener("mousemove", (e) => {
      if (this.dragging) {
        this.camera.x -= e.movementX / this.camera.scale;
        this.camera.y += e.movementY / this.camera.scale;
        this.draw();
      } else if (this.lassoing) {
        this.lasso.push([e.offsetX, e.offsetY]);
        this.draw();
      }
    });
    const finish = () => {
      if (this.lassoing && this.lasso.length >= 3) {
        this.onLasso(
          lassoSelect(this.embedding, this.camera, canvas.width, canvas.height, this.lasso),
        );
      }
      this.dragging = false;
      this.lassoing = false;
      this.lasso = [];
      this.draw();
    };
    canvas.addEventListener("mouseup", finish);
    canvas.addEventListener("mouseleave", finish);
  }

  /** Switch color mode without touching the camera. */
  setColorMode(mode: ColorMode): void {
    this.colorMode = mode;
    this.draw();
  }

  orderedCategories(): string[] {
    const seen = new Set<string>();
    for (const c of this.embedding.categories ?? []) {
      if (c) seen.add(c);
    }
    return [...seen].sort();
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { width, height } = this.canvas;
    ctx.clearRect(0, 0, width, height);
    const cats = this.orderedCategories();
    this.embedding.points.forEach((p, i) => {
      const [sx, sy] = worldToScreen(this.camera, width, height, p);
      if (sx < -4 || sy < -4 || sx > width + 4 || sy > height + 4) return;
      ctx.fillStyle = pointColor(this.embedding, i, this.colorMode, cats);
      ctx.beginPath();
      ctx.arc(sx, sy, 3, 0, Math.PI * 2);
      ctx.fill();
    });
    if (this.lasso.length > 1) {
      ctx.strokeStyle = "#fff";
      ctx.setLineDash([4, 4]);
      ctx.beginPath();
      ctx.moveTo(this.lasso[0][0], this.lasso[0][1]);
      for (const [x, y] of this.lasso.slice(1)) ctx.lineTo(x, y);
      ctx.closePath();
      ctx.stroke();
      ctx.setLineDash([]);
    }
  }
}
