/** Rating queue: keyboard-first scoring of specimens and proposals.
 *
 * Scores apply optimistically and reconcile with the server response;
 * a transport failure rolls the optimistic value back and the retry
 * reuses the same request id, so the ledger never sees duplicates.
 * The full keyboard path is: arrows to move, digit to score ('+' for
 * 10), Enter to confirm category, no pointer required.
 */

import { Api, newRequestId, SpecimenDto } from "./api.js";

export interface QueueItem {
  id: string;
  image: string | null;
  genotype: number[];
  score: number | null;
  category: string | null;
  pending?: boolean;
}

export interface RatingEvents {
  onChange(): void;
  onError(message: string): void;
}

export class RatingQueue {
  items: QueueItem[] = [];
  cursor = 0;

  constructor(
    private api: Api,
    private events: RatingEvents,
  ) {}

  load(specimens: SpecimenDto[]): void {
    this.items = specimens.map((s) => ({
      id: s.id,
      image: s.image,
      genotype: s.genotype,
      score: s.score,
      category: s.category,
    }));
    this.cursor = 0;
    this.events.onChange();
  }

  /** Queue a freshly proposed phenotype for rating. */
  push(item: QueueItem): void {
    this.items.push(item);
    this.events.onChange();
  }

  current(): QueueItem | undefined {
    return this.items[this.cursor];
  }

  move(delta: number): void {
    if (!this.items.length) return;
    this.cursor = Math.min(Math.max(this.cursor + delta, 0), this.items.length - 1);
    this.events.onChange();
  }

  /** Optimistic score + category submission with reconcile/rollback. */
  async rate(score: number, category?: string | null): Promise<void> {
    const item = this.current();
    if (!item) return;
    const before = { score: item.score, category: item.category };
    item.score = score;
    if (category !== undefined) item.category = category;
    item.pending = true;
    this.events.onChange();
    try {
      await this.api.submitEvaluation({
        id: item.id,
        score,
        category: category === undefined ? item.category : category,
        request_id: newRequestId(),
      });
      item.pending = false;
      this.move(1); // auto-advance keeps the keyboard path pointer-free
    } catch (err) {
      item.score = before.score;
      item.category = before.category;
      item.pending = false;
      this.events.onChange();
      this.events.onError(err instanceof Error ? err.message : String(err));
    }
  }

  /** Map a key press to a rating action; returns true when handled. */
  async handleKey(key: string, category?: string | null): Promise<boolean> {
    if (key >= "0" && key <= "9") {
      await this.rate(Number(key), category);
      return true;
    }
    if (key === "+" || key === "=") {
      await this.rate(10, category);
      return true;
    }
    if (key === "ArrowRight" || key === "ArrowDown") {
      this.move(1);
      return true;
    }
    if (key === "ArrowLeft" || key === "ArrowUp") {
      this.move(-1);
      return true;
    }
    return false;
  }
}
