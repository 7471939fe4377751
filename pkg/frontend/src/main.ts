/** App shell: rating queue, confidence grid, embedding scatter and the
 * cross-section map explorer, all over the JSON API. */

import { Api, ProposalDto, SpecimenDto } from "./api.js";
import { renderGrid } from "./grid.js";
import { renderMap } from "./mapview.js";
import { RatingQueue } from "./rating.js";
import { embeddingIsStale, ScatterView } from "./scatter.js";

const api = new Api("");

const panels = {
  rate: document.getElementById("panel-rate")!,
  grid: document.getElementById("panel-grid")!,
  scatter: document.getElementById("panel-scatter")!,
  map: document.getElementById("panel-map")!,
};
const status = document.getElementById("status")!;

function note(message: string): void {
  status.textContent = message;
}

function showPanel(name: keyof typeof panels): void {
  for (const [key, el] of Object.entries(panels)) {
    el.classList.toggle("active", key === name);
  }
  document.querySelectorAll("nav button").forEach((b) => {
    b.classList.toggle("active", (b as HTMLElement).dataset.panel === name);
  });
}

document.querySelectorAll("nav button").forEach((button) => {
  button.addEventListener("click", () => {
    showPanel((button as HTMLElement).dataset.panel as keyof typeof panels);
  });
});

// ---------------------------------------------------------------- rating

const queue = new RatingQueue(api, {
  onChange: renderRatingPanel,
  onError: (msg) => note(`submit failed: ${msg}`),
});
const categoryInput = document.getElementById("category-input") as HTMLInputElement;

function renderRatingPanel(): void {
  const stage = document.getElementById("rate-stage")!;
  const item = queue.current();
  stage.textContent = "";
  if (!item) {
    stage.textContent = "queue empty - load specimens or propose a batch";
    return;
  }
  const img = document.createElement("img");
  img.className = "rate-image";
  if (item.image) {
    img.src = item.image.startsWith("/") ? item.image : `/images/${item.image.split("/").pop()}`;
    stage.appendChild(img);
  }
  const caption = document.createElement("p");
  const scoreText = item.score === null ? "unrated" : `score ${item.score}`;
  caption.textContent =
    `${item.id} - ${scoreText}` +
    (item.category ? ` - ${item.category}` : "") +
    (item.pending ? " (saving...)" : "");
  stage.appendChild(caption);
  const progress = document.getElementById("rate-progress")!;
  progress.textContent = `${queue.cursor + 1} / ${queue.items.length}`;
}

document.addEventListener("keydown", (e) => {
  if (!panels.rate.classList.contains("active")) return;
  if (e.target === categoryInput) {
    if (e.key === "Enter" || e.key === "Escape") categoryInput.blur();
    return; // typing a category must never score
  }
  void queue.handleKey(e.key, categoryInput.value.trim() || undefined);
});

async function refreshCategories(): Promise<void> {
  const { census } = await api.categories();
  const datalist = document.getElementById("category-options")!;
  datalist.textContent = "";
  for (const label of Object.keys(census).sort()) {
    if (label.startsWith("(")) continue;
    const option = document.createElement("option");
    option.value = label;
    datalist.appendChild(option);
  }
}

document.getElementById("load-unrated")!.addEventListener("click", async () => {
  const { specimens } = await api.specimens();
  const unrated = specimens.filter((s) => s.score === null);
  queue.load(unrated.length ? unrated : specimens);
  note(`loaded ${queue.items.length} specimens into the rating queue`);
});

// ------------------------------------------------------------------ grid

document.getElementById("refresh-grid")!.addEventListener("click", async () => {
  try {
    const payload = await api.confidenceGrid();
    renderGrid(panels.grid.querySelector(".grid-host") as HTMLElement, payload, {
      onSelect(specimen: SpecimenDto) {
        queue.push({
          id: specimen.id,
          image: specimen.image,
          genotype: specimen.genotype,
          score: specimen.score,
          category: specimen.category,
        });
        note(`${specimen.id} queued for rating`);
      },
    });
  } catch (err) {
    note(
      `confidence grid needs a trained category model - start one from the Map tab (${err instanceof Error ? err.message : err})`,
    );
  }
});

// --------------------------------------------------------------- scatter

let scatter: ScatterView | null = null;

async function loadScatter(space: "genotype" | "feature"): Promise<void> {
  try {
    const embedding = await api.embedding(space);
    const canvas = document.getElementById("scatter-canvas") as HTMLCanvasElement;
    scatter = new ScatterView(canvas, embedding, (ids) => {
      const parentIds = document.getElementById("lasso-parents") as HTMLTextAreaElement;
      parentIds.value = ids.join(",");
      (document.getElementById("lasso-propose") as HTMLButtonElement).disabled = ids.length === 0;
      note(`${ids.length} specimens in lasso`);
    });
    scatter.draw();
    const { specimens } = await api.specimens();
    const byId = new Map(specimens.map((s) => [s.id, s]));
    const stale = embeddingIsStale(embedding, byId);
    document.getElementById("scatter-stale")!.textContent = stale
      ? "stale: ratings changed since this embedding was computed"
      : "";
  } catch (err) {
    note(`embedding not ready: ${err instanceof Error ? err.message : err}`);
  }
}

document.getElementById("load-scatter")!.addEventListener("click", () => {
  const space = (document.getElementById("scatter-space") as HTMLSelectElement).value as
    | "genotype"
    | "feature";
  void loadScatter(space);
});

document.getElementById("scatter-color")!.addEventListener("change", (e) => {
  scatter?.setColorMode((e.target as HTMLSelectElement).value as "category" | "band");
});

document.getElementById("start-embed")!.addEventListener("click", async () => {
  const space = (document.getElementById("scatter-space") as HTMLSelectElement).value;
  const job = await api.startJob("embed", { space });
  note(`embed job ${job.job_id}: ${job.state}`);
  const done = await api.pollJob(job.job_id);
  note(`embed job ${done.state}${done.error ? `: ${done.error}` : ""}`);
});

document.getElementById("lasso-propose")!.addEventListener("click", async () => {
  const ids = (document.getElementById("lasso-parents") as HTMLTextAreaElement).value
    .split(",")
    .filter(Boolean);
  if (!ids.length) return;
  const strategy = (document.getElementById("lasso-strategy") as HTMLSelectElement).value;
  const res = await api.propose(strategy, 8, { parents: ids, sigma: 0.05 });
  for (const p of res.proposals) queueProposal(p);
  note(`${res.proposals.length} ${strategy} proposals queued for rating`);
});

// ------------------------------------------------------------------- map

function queueProposal(p: ProposalDto): void {
  queue.push({
    id: `proposal:${p.phenotype.split("_").pop()?.replace(".png", "") ?? p.phenotype}`,
    image: p.phenotype,
    genotype: p.genotype,
    score: null,
    category: p.predicted_category?.predicted ?? null,
  });
}

document.getElementById("load-map")!.addEventListener("click", async () => {
  const baseId = (document.getElementById("map-base") as HTMLInputElement).value;
  const dimX = Number((document.getElementById("map-dimx") as HTMLInputElement).value);
  const dimY = Number((document.getElementById("map-dimy") as HTMLInputElement).value);
  const target = (document.getElementById("map-target") as HTMLSelectElement).value as
    | "category"
    | "score";
  try {
    const map = await api.map({ base_id: baseId, dim_x: dimX, dim_y: dimY, res: 24, target });
    renderMap(panels.map.querySelector(".map-host") as HTMLElement, api, map, {
      onProposal(p) {
        queueProposal(p);
        note(`map cell rendered - queued for rating (predicted ${p.predicted_category?.predicted ?? "?"})`);
      },
      onError(message) {
        note(message);
      },
    });
  } catch (err) {
    note(
      `map needs a trained genotype model - use "train model" (${err instanceof Error ? err.message : err})`,
    );
  }
});

document.getElementById("train-model")!.addEventListener("click", async () => {
  const target = (document.getElementById("map-target") as HTMLSelectElement).value;
  const job = await api.startJob("train_tabular", { target });
  note(`training job ${job.job_id}: ${job.state}`);
  const done = await api.pollJob(job.job_id);
  note(`training ${done.state}${done.error ? `: ${done.error}` : ""}`);
});

// ------------------------------------------------------------------ init

void refreshCategories();
showPanel("rate");
renderRatingPanel();
note("ready");
