"""HTTP/JSON API over the dataset, measures, embeddings, predictors,
cross-section maps, proposal strategies and the evaluation ledger.

Single-process FastAPI app: request handling is concurrent, long work
(train / embed / measure) runs on a small worker pool as content-addressed
jobs (re-posting identical params returns the cached job), and all
evaluation writes funnel through the append-only ledger so a restart
reproduces the exact service state.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse, HTMLResponse
from pydantic import BaseModel

from . import embed as embed_mod
from . import explore, features, genopredict, measures, stats
from .dataset import Evaluation, Ledger, load_manifest
from .errors import DataError, NumericError
from .learn import PredictorModel, load_model, save_model

DATA_ENV = "SPECIESCOPE_DATA"
PORT_ENV = "SPECIESCOPE_PORT"

JOB_KINDS = ("train_head", "train_tabular", "embed", "measure")


def _config_hash(kind: str, params: dict) -> str:
    payload = json.dumps({"kind": kind, "params": params}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class Job:
    job_id: str
    kind: str
    params: dict
    state: str = "queued"  # queued -> running -> done | failed
    progress: float = 0.0
    result_ref: Optional[str] = None
    error: Optional[str] = None

    def as_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "kind": self.kind,
            "state": self.state,
            "progress": self.progress,
            "result_ref": self.result_ref,
            "error": self.error,
        }


class EvaluationIn(BaseModel):
    id: str
    score: int
    category: Optional[str] = None
    author: str = ""
    request_id: Optional[str] = None


class JobIn(BaseModel):
    kind: str
    params: dict = {}


class ProposalIn(BaseModel):
    strategy: str
    n: int = 8
    params: dict = {}


class AppState:
    """Everything behind the API: dataset + ledger view, model store,
    caches and the job registry."""

    def __init__(self, data_root, generator: str = "toy", workers: int = 2):
        self.root = Path(data_root)
        self.dataset = load_manifest(self.root / "manifest.csv")
        self.ledger = Ledger(self.root / "ledger.jsonl")
        self.generator = explore.get_generator(generator)
        self.artifacts = self.root / "artifacts"
        self.artifacts.mkdir(exist_ok=True)
        self.models_dir = self.root / "models"
        self.models_dir.mkdir(exist_ok=True)
        self.lock = threading.Lock()
        self.models: dict[str, PredictorModel] = {}
        self.jobs: dict[str, Job] = {}
        self.measure_cache: dict[str, measures.MeasureRecord] = {}
        self.embeddings: dict[str, embed_mod.Embedding2D] = {}
        self.pool = ThreadPoolExecutor(max_workers=workers)
        self.features: Optional[features.FeatureSet] = None
        for candidate in ("features.fvec", "features.csv"):
            if (self.root / candidate).exists():
                self.features = features.ingest_features(self.root / candidate, self.dataset)
                break
        self._refresh_view()
        for path in self.models_dir.glob("*.bin"):
            self.models[path.stem] = load_model(path)

    def _refresh_view(self) -> None:
        self.view = self.dataset.with_evaluations(self.ledger.replay())

    def record(self, specimen_id: str, evaluation: Evaluation, request_id=None):
        self.dataset.get(specimen_id)
        entry = self.ledger.append(specimen_id, evaluation, request_id)
        with self.lock:
            self._refresh_view()
        return entry

    def model_for(self, target: str) -> Optional[PredictorModel]:
        with self.lock:
            tabular = [
                m for name, m in sorted(self.models.items())
                if m.target == target and m.spec.input_dim == 12
            ]
        return tabular[-1] if tabular else None

    def shutdown(self) -> None:
        self.pool.shutdown(wait=True)

    # job bodies ---------------------------------------------------------

    def _measure_specimen(self, specimen) -> measures.MeasureRecord:
        if specimen.id in self.measure_cache:
            return self.measure_cache[specimen.id]
        if specimen.image_path is None:
            raise DataError(f"specimen {specimen.id} has no image")
        img = measures.load_image(self.root / specimen.image_path)
        rec = measures.measure_all(img)
        with self.lock:
            self.measure_cache[specimen.id] = rec
        return rec

    def run_measure_job(self, job: Job) -> str:
        ids = job.params.get("ids") or [s.id for s in self.view.specimens if s.image_path]
        out = self.artifacts / f"measures_{job.job_id}.csv"
        with out.open("w", encoding="utf-8") as fh:
            fh.write("id," + ",".join(measures.MEASURE_FIELDS) + "\n")
            for i, sid in enumerate(ids):
                rec = self._measure_specimen(self.view.get(sid))
                fh.write(sid + "," + ",".join(repr(v) for v in rec.as_tuple()) + "\n")
                job.progress = (i + 1) / len(ids)
        return f"/static/{out.name}"

    def run_embed_job(self, job: Job) -> str:
        space = job.params.get("space", "genotype")
        seed = int(job.params.get("seed", 0))
        iterations = int(job.params.get("iterations", 1000))
        if space == "genotype":
            emb = embed_mod.embed_genotypes(self.view, iterations=iterations, seed=seed)
        elif space == "feature":
            if self.features is None:
                raise DataError("no feature sidecar loaded")
            order = [s for s in self.view.specimens if s.id in set(self.features.ids)]
            matrix = np.stack([self.features.vector(s.id) for s in order])
            emb = embed_mod.embed_features(
                matrix, [s.id for s in order], order, iterations=iterations, seed=seed
            )
        else:
            raise DataError(f"unknown embedding space {space!r}")
        job.progress = 0.9
        with self.lock:
            self.embeddings[space] = emb
        out = self.artifacts / f"embedding_{space}_{job.job_id}.json"
        emb.to_json(out)
        return f"/static/{out.name}"

    def run_train_job(self, job: Job) -> str:
        target = job.params.get("target", "category")
        seed = int(job.params.get("seed", 0))
        if job.kind == "train_tabular":
            config = genopredict.TabularConfig(seed=seed)
            model = genopredict.train_tabular(self.view, config, target)
        else:
            if self.features is None:
                raise DataError("no feature sidecar loaded")
            if target == "category":
                model = features.train_category_head(self.features, self.view, seed=seed)
            else:
                model = features.train_score_head(self.features, self.view, seed=seed)
        job.progress = 0.9
        name = f"{job.kind}_{target}_{job.job_id}"
        save_model(model, self.models_dir / f"{name}.bin")
        with self.lock:
            self.models[name] = model
        return f"/api/models/{name}"

    def submit(self, kind: str, params: dict) -> Job:
        if kind not in JOB_KINDS:
            raise DataError(f"unknown job kind {kind!r} (expected one of {JOB_KINDS})")
        job_id = _config_hash(kind, params)
        with self.lock:
            if job_id in self.jobs:
                return self.jobs[job_id]
            job = Job(job_id=job_id, kind=kind, params=params)
            self.jobs[job_id] = job

        def body():
            job.state = "running"
            try:
                if kind == "measure":
                    ref = self.run_measure_job(job)
                elif kind == "embed":
                    ref = self.run_embed_job(job)
                else:
                    ref = self.run_train_job(job)
                job.progress = 1.0
                job.result_ref = ref
                job.state = "done"
            except Exception as exc:  # surfaced through the job record
                job.error = f"{type(exc).__name__}: {exc}"
                job.state = "failed"

        self.pool.submit(body)
        return job


def _specimen_payload(s, prediction=None) -> dict:
    out = {
        "id": s.id,
        "image": s.image_path,
        "genotype": s.genotype.values.tolist(),
        "score": s.score,
        "category": s.category,
        "split": s.split,
    }
    if prediction is not None:
        out["prediction"] = prediction.as_dict()
    return out


def create_app(data_root, generator: str = "toy", workers: int = 2) -> FastAPI:
    from contextlib import asynccontextmanager

    state = AppState(data_root, generator=generator, workers=workers)

    @asynccontextmanager
    async def lifespan(_):
        yield
        state.shutdown()

    app = FastAPI(title="speciescope", lifespan=lifespan)
    app.state.store = state

    @app.exception_handler(DataError)
    async def data_error(_, exc: DataError):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(NumericError)
    async def numeric_error(_, exc: NumericError):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/api/specimens")
    def list_specimens(
        split: Optional[str] = None,
        category: Optional[str] = None,
        order: Optional[str] = None,
    ):
        specimens = list(state.view.specimens)
        if split:
            specimens = [s for s in specimens if s.split == split]
        if category:
            specimens = [s for s in specimens if s.category == category]
        if order == "confidence":
            model = state.model_for("category")
            if model is None:
                raise DataError("no category model trained yet")
            preds = {
                s.id: genopredict.predict_tabular(model, s.genotype.values)
                for s in specimens
            }
            grouped = features.order_by_confidence(
                [preds[s.id] for s in specimens], [s.id for s in specimens]
            )
            by_id = {s.id: s for s in specimens}
            return {
                "order": "confidence",
                "groups": [
                    {
                        "category": cat,
                        "specimens": [
                            _specimen_payload(by_id[sid], preds[sid]) for sid in ids
                        ],
                    }
                    for cat, ids in grouped
                ],
            }
        return {"specimens": [_specimen_payload(s) for s in specimens]}

    @app.get("/api/specimens/{specimen_id}")
    def get_specimen(specimen_id: str):
        return _specimen_payload(state.view.get(specimen_id))

    @app.post("/api/evaluations")
    def post_evaluation(body: EvaluationIn):
        evaluation = Evaluation(score=body.score, category=body.category, author=body.author)
        entry = state.record(body.id, evaluation, body.request_id)
        return {
            "seq": entry.sequence,
            "id": entry.specimen_id,
            "score": entry.evaluation.score,
            "category": entry.evaluation.category,
        }

    @app.get("/api/categories")
    def categories():
        from .dataset import category_census

        return {"census": category_census(state.view)}

    @app.get("/api/measures")
    def get_measures(ids: str = Query(...)):
        out = {}
        for sid in ids.split(","):
            rec = state._measure_specimen(state.view.get(sid.strip()))
            out[sid.strip()] = dict(zip(measures.MEASURE_FIELDS, rec.as_tuple()))
        return {"measures": out}

    @app.get("/api/correlations")
    def correlations():
        rated = [
            s
            for s in state.view.specimens
            if s.evaluation is not None and s.id in state.measure_cache
        ]
        if len(rated) < 3:
            raise DataError(
                "not enough cached measures; POST /api/jobs {kind: measure} first"
            )
        table = stats.correlation_table(
            [state.measure_cache[s.id] for s in rated], [s.score for s in rated]
        )
        return table.as_dict()

    @app.get("/api/embedding")
    def get_embedding(space: str = "genotype"):
        with state.lock:
            emb = state.embeddings.get(space)
        if emb is None:
            raise DataError(f"no {space} embedding yet; POST /api/jobs {{kind: embed}}")
        return emb.as_dict()

    @app.post("/api/jobs")
    def post_job(body: JobIn):
        return state.submit(body.kind, body.params).as_dict()

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"no job {job_id}")
        return job.as_dict()

    @app.get("/api/models/{name}")
    def get_model(name: str):
        with state.lock:
            model = state.models.get(name)
        if model is None:
            raise HTTPException(status_code=404, detail=f"no model {name}")
        return {
            "name": name,
            "target": model.target,
            "labels": model.labels,
            "metrics": model.metrics,
            "input_dim": model.spec.input_dim,
        }

    @app.get("/api/maps")
    def get_map(
        base_id: str,
        dim_x: int,
        dim_y: int,
        res: int = 24,
        target: str = "category",
    ):
        if dim_x == dim_y:
            raise DataError("dim_x and dim_y must differ")
        model = state.model_for(target)
        if model is None:
            raise DataError(f"no {target} model trained yet")
        base = state.view.get(base_id).genotype
        cs = explore.cross_section(
            model, base, dim_x, dim_y, [(0.0, 1.0), (0.0, 1.0)], (res, res)
        )
        png = state.artifacts / f"map_{_config_hash('map', {'b': base_id, 'x': dim_x, 'y': dim_y, 'r': res, 't': target})}.png"
        cs.to_png(png)
        payload = cs.as_dict()
        payload["png"] = f"/static/{png.name}"
        return payload

    @app.post("/api/proposals")
    def post_proposals(body: ProposalIn):
        params = dict(body.params)
        seed = int(params.pop("seed", 0))
        model = state.model_for("score")
        if body.strategy == "random":
            proposals = explore.propose_random(body.n, seed=seed)
            stats_out = None
        elif body.strategy in ("mutation", "crossover"):
            parent_ids = params.pop("parents", None)
            if parent_ids:
                parents = [state.view.get(p) for p in parent_ids]
            else:
                parents = [s for s in state.view.specimens if s.evaluation is not None]
            if body.strategy == "mutation":
                proposals = explore.propose_mutation(
                    parents, float(params.pop("sigma", 0.05)), body.n, seed=seed
                )
            else:
                proposals = explore.propose_crossover(parents, body.n, seed=seed)
            stats_out = None
        elif body.strategy == "montecarlo":
            required = params.pop("required_category", None)
            if required is not None:
                cat_model = state.model_for("category")
                if cat_model is None:
                    raise DataError("category-constrained montecarlo needs a trained category model")
                proposals, stats_out = explore.propose_montecarlo(
                    cat_model,
                    body.n,
                    required_category=str(required),
                    seed=seed,
                    max_attempts=int(params.pop("max_attempts", 10000)),
                )
            else:
                if model is None:
                    raise DataError("montecarlo needs a trained score model")
                proposals, stats_out = explore.propose_montecarlo(
                    model,
                    body.n,
                    min_predicted_score=float(params.pop("min_predicted_score", 5.0)),
                    seed=seed,
                    max_attempts=int(params.pop("max_attempts", 10000)),
                )
        elif body.strategy == "pinned":
            # explicit genotypes, e.g. a clicked cross-section map cell
            genotypes = params.pop("genotypes", None)
            if not genotypes:
                raise DataError("pinned strategy needs params.genotypes")
            from .dataset import Genotype

            proposals = [
                explore.Proposal(
                    genotype=Genotype(np.asarray(g, dtype=np.float64)),
                    strategy="pinned",
                    provenance={"source": params.get("source", "client"), "index": i},
                )
                for i, g in enumerate(genotypes)
            ]
            stats_out = None
        else:
            raise DataError(f"unknown strategy {body.strategy!r}")
        out = []
        for p in proposals:
            img = state.generator.render(p.genotype)
            raw = np.round(img * 255.0).astype(np.uint8)
            digest = hashlib.sha256(raw.tobytes()).hexdigest()[:16]
            png = state.artifacts / f"phenotype_{digest}.png"
            if not png.exists():
                from PIL import Image

                Image.fromarray(raw).save(png)
            item = p.as_dict()
            item["phenotype"] = f"/static/{png.name}"
            cat_model = state.model_for("category")
            if cat_model is not None:
                item["predicted_category"] = genopredict.predict_tabular(
                    cat_model, p.genotype.values
                ).as_dict()
            out.append(item)
        return {"proposals": out, "stats": stats_out}

    @app.get("/static/{name}")
    def static_artifact(name: str):
        path = state.artifacts / name
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"no artifact {name}")
        return FileResponse(path)

    @app.get("/images/{name}")
    def dataset_image(name: str):
        path = state.root / "images" / name
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"no image {name}")
        return FileResponse(path)

    frontend = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if frontend.exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/app", StaticFiles(directory=frontend, html=True), name="app")

        @app.get("/", response_class=HTMLResponse)
        def index():
            return (frontend / "index.html").read_text(encoding="utf-8")

    return app


def serve(data_root=None, port: Optional[int] = None, generator: str = "toy"):
    """Run the API with uvicorn; honors SPECIESCOPE_DATA / SPECIESCOPE_PORT."""
    import uvicorn

    data_root = data_root or os.environ.get(DATA_ENV)
    if not data_root:
        raise DataError(f"no dataset root: pass data_root or set {DATA_ENV}")
    port = port or int(os.environ.get(PORT_ENV, "8702"))
    app = create_app(data_root, generator=generator)
    uvicorn.run(app, host="127.0.0.1", port=port)
