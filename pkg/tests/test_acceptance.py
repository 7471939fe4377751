"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria that depend on the published artist dataset (2, 3) or a real
feature sidecar (4) run their stated assertions when SPECIESCOPE_DATA
points at a prepared dataset root (manifest.csv with the published split,
optionally features.fvec).  Without it they run the same pipelines on the
synthetic stand-in built by the toy generator and scripted rater, assert
the bounds that world genuinely supports, and carry a SKIPPED-REAL-DATA
marker in their report line.

Run with `pytest tests/test_acceptance.py -s` to see the report lines.
"""

import os
import shutil
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from speciescope import embed as E
from speciescope import explore as X
from speciescope import features as F
from speciescope import genopredict as G
from speciescope import learn as L
from speciescope import measures as M
from speciescope import stats, synth
from speciescope.cli import main as cli_main
from speciescope.cli import read_measures_csv
from speciescope.dataset import load_manifest

from shapes import annulus, disk, horizontal_line, sierpinski_carpet, three_disks
from test_embed import brute_force_joint_affinities, two_clusters
from test_explore import score_oracle, sign_oracle, three_band_oracle, unit_genotype
from test_learn import separable_set, xor_set

REAL_ROOT = os.environ.get("SPECIESCOPE_DATA")
SYNTH_SEED = 11
SYNTH_N = 1774
SYNTH_IMAGE_SIZE = 256


def real_dataset_root():
    if REAL_ROOT and (Path(REAL_ROOT) / "manifest.csv").exists():
        return Path(REAL_ROOT)
    return None


@contextmanager
def criterion(number, name, marker=""):
    suffix = f" {marker}" if marker else ""
    try:
        yield
    except BaseException as exc:
        print(f"\n[ACCEPTANCE] criterion {number} ({name}): FAIL{suffix} - {exc}")
        raise
    print(f"\n[ACCEPTANCE] criterion {number} ({name}): PASS{suffix}")


@pytest.fixture(scope="session")
def dataset_root(tmp_path_factory):
    """The published dataset when available, else the synthetic twin."""
    real = real_dataset_root()
    if real is not None:
        return real, "real"
    root = tmp_path_factory.mktemp("acceptance")
    synth.build_dataset(root, n=SYNTH_N, seed=SYNTH_SEED, image_size=SYNTH_IMAGE_SIZE)
    return root, "synthetic"


@pytest.fixture(scope="session")
def measures_csv(dataset_root):
    """Measures CSV for every specimen, timed for the criterion-2 budget."""
    root, kind = dataset_root
    out = root / "acceptance_measures.csv"
    size = ["--size", str(SYNTH_IMAGE_SIZE)] if kind == "synthetic" else []
    t0 = time.monotonic()
    code = cli_main(["measure", str(root / "manifest.csv"), "--out", str(out), *size])
    assert code == 0
    return out, time.monotonic() - t0


def test_criterion_1_measures_oracle_suite():
    t0 = time.monotonic()
    with criterion(1, "measures oracle suite"):
        assert M.euler(disk()) == 1
        assert M.euler(annulus()) == 0
        assert M.contours(three_disks()) == 3
        assert M.fractal_dim(np.ones((512, 512))) == pytest.approx(2.0, abs=0.05)
        assert M.fractal_dim(horizontal_line(512)) == pytest.approx(1.0, abs=0.05)
        assert M.fractal_dim(sierpinski_carpet(5)) == pytest.approx(
            np.log(8) / np.log(3), abs=0.1
        )
        const = np.full((64, 64), 0.5)
        assert M.entropy(const) == pytest.approx(0.0, abs=1e-9)
        assert M.energy(const) == pytest.approx(1.0, abs=1e-9)
        two = np.zeros((64, 64))
        two[:32] = 1.0
        assert M.entropy(two) == pytest.approx(1.0, abs=1e-9)
        assert M.energy(two) == pytest.approx(0.5, abs=1e-9)
        uniform = (np.arange(256) / 256.0).reshape(16, 16)
        assert M.entropy(uniform) == pytest.approx(8.0, abs=1e-9)
        assert M.energy(uniform) == pytest.approx(1 / 256, abs=1e-9)
        elapsed = time.monotonic() - t0
        assert elapsed < 10.0, f"oracle suite took {elapsed:.1f}s"


def _correlation_variants(root, records):
    """(label, CorrelationMatrix, n) for the full set and with the empty
    category removed (paper: 1,774 vs 1,523 actual forms)."""
    ds = load_manifest(root / "manifest.csv")
    variants = []
    for label, excluded in (("full", set()), ("non-empty", {"empty", "black"})):
        rated = [
            s
            for s in ds.specimens
            if s.evaluation is not None and s.id in records and s.category not in excluded
        ]
        table = stats.correlation_table(
            [records[s.id] for s in rated], [s.score for s in rated]
        )
        variants.append((label, table, len(rated)))
    return variants


def test_criterion_2_table1(dataset_root, measures_csv):
    root, kind = dataset_root
    csv_path, measure_seconds = measures_csv
    marker = "" if kind == "real" else "SKIPPED-REAL-DATA (synthetic twin)"
    with criterion(2, "Table 1 reproduction", marker):
        records = read_measures_csv(csv_path)
        variants = _correlation_variants(root, records)
        assert measure_seconds < 1800, f"measure pass took {measure_seconds:.0f}s"
        for label, table, n in variants:
            assert table.top_score_correlate() == "acomplex", (
                f"{label}: top score correlate is {table.top_score_correlate()}"
            )
            assert table.cell("acomplex", "score") >= 0.55
            assert table.p_value("acomplex", "score") < 1e-10
            assert table.p_value("entropy", "energy") < 1e-10
            if kind == "real":
                assert table.cell("entropy", "energy") <= -0.95
                assert table.cell("contours", "euler") <= -0.95
                assert table.p_value("contours", "euler") < 1e-10
            else:
                # frozen from the pinned synthetic build (seed 11):
                # entropy-energy -0.946 full / -0.944 non-empty;
                # contours-euler -0.20: toy morphology is not hole-dominated
                # like the artist's forms, so only the sign is asserted
                assert table.cell("entropy", "energy") <= -0.90
                assert table.cell("contours", "euler") < 0.0


def test_criterion_3_genotype_predictor_benchmark(dataset_root):
    root, kind = dataset_root
    marker = "" if kind == "real" else "SKIPPED-REAL-DATA (synthetic twin)"
    with criterion(3, "genotype predictor benchmark", marker):
        ds = load_manifest(root / "manifest.csv")
        n_train, n_val = len(ds.subset("train")), len(ds.subset("validation"))
        assert n_train > 0 and n_val > 0, "manifest must carry the published split"
        if kind == "real":
            assert (n_train, n_val) == (1421, 353)
        t0 = time.monotonic()
        report = G.compare_predictors(ds, G.TabularConfig(seed=0))
        elapsed = time.monotonic() - t0
        tab_acc = report["tabular"]["category_accuracy"]
        knn_acc = report["knn"]["category_accuracy"]
        assert tab_acc >= 0.60, f"tabular accuracy {tab_acc:.3f}"
        assert 0.40 <= knn_acc <= 0.60, f"knn best-of-k accuracy {knn_acc:.3f}"
        assert tab_acc - knn_acc >= 0.08, f"gap {tab_acc - knn_acc:.3f}"
        assert report["tabular"]["score_rmse"] <= 2.2
        assert report["tabular"]["score_rmse"] < report["knn"]["score_rmse"]
        assert elapsed < 300, f"benchmark took {elapsed:.0f}s"


def test_criterion_4_feature_head(dataset_root):
    root, kind = dataset_root
    sidecar = None
    for name in ("features.fvec", "features.csv"):
        if (root / name).exists():
            sidecar = root / name
            break
    ds = load_manifest(root / "manifest.csv")
    if kind == "real" and sidecar is not None:
        with criterion(4, "feature head"):
            fs = F.ingest_features(sidecar, ds)
            cat = F.train_category_head(fs, ds, seed=0)
            assert cat.metrics["accuracy"] >= 0.80
            score = F.train_score_head(fs, ds, seed=0)
            assert score.metrics["rmse"] <= 1.0
            val = [s for s in ds.subset("validation") if s.category and s.id in set(fs.ids)]
            preds = [F.predict(cat, fs.vector(s.id)) for s in val]
            quartiles = F.quartile_accuracy(preds, [s.category for s in val], [s.id for s in val])
            assert quartiles[0] >= quartiles[3] + 0.20
    else:
        with criterion(4, "feature head", "SKIPPED-REAL-DATA (synthetic separable features)"):
            fs = synth.separable_features(ds, seed=0)
            cat = F.train_category_head(fs, ds, seed=0)
            assert cat.metrics["accuracy"] == 1.0
            score = F.train_score_head(fs, ds, seed=0)
            assert score.metrics["rmse"] <= 1.0
            val = [s for s in ds.subset("validation") if s.category]
            preds = [F.predict(cat, fs.vector(s.id)) for s in val]
            quartiles = F.quartile_accuracy(preds, [s.category for s in val], [s.id for s in val])
            assert np.all(quartiles == 1.0)


def test_criterion_5_learning_kernel():
    with criterion(5, "learning kernel properties"):
        # gradients vs central finite differences
        spec = L.MlpSpec(12, (8,), 4)
        params = L.init_params(spec, 3)
        rng = np.random.default_rng(4)
        Xb = rng.normal(0, 1, (16, 12))
        yb = rng.integers(0, 4, 16)
        flat = L.flatten_params(params)
        analytic = L.flatten_params(L.mlp_backward(spec, params, Xb, yb))
        h = 1e-5
        fd = np.zeros_like(flat)
        for i in range(len(flat)):
            up, down = flat.copy(), flat.copy()
            up[i] += h
            down[i] -= h
            fd[i] = (
                L.batch_loss(spec, L.unflatten_params(spec, up), Xb, yb)
                - L.batch_loss(spec, L.unflatten_params(spec, down), Xb, yb)
            ) / (2 * h)
        rel = np.abs(analytic - fd) / (np.abs(analytic) + np.abs(fd) + 1e-8)
        assert rel.max() < 1e-4
        # one-cycle endpoints
        assert L.one_cycle_lr(0, 100, 1.0) == pytest.approx(1 / 25, abs=1e-15)
        assert L.one_cycle_lr(25, 100, 1.0) == pytest.approx(1.0, abs=1e-12)
        assert L.one_cycle_lr(99, 100, 1.0) == pytest.approx(1e-4, abs=1e-12)
        # bit-determinism
        Xs, ys = separable_set(n=64)
        sched = L.TrainSchedule(phases=((3, 0.05),), batch_size=16, seed=11)
        spec2 = L.MlpSpec(10, (6,), 2)
        p1, _ = L.train(spec2, sched, (Xs, ys))
        p2, _ = L.train(spec2, sched, (Xs, ys))
        assert np.array_equal(L.flatten_params(p1), L.flatten_params(p2))
        # XOR learnable with a hidden layer, not by a linear head
        Xx, yx = xor_set()
        Xv, yv = xor_set(seed=9)
        sched_xor = L.TrainSchedule(phases=((60, 0.5),), batch_size=32, seed=0)
        _, rep_hidden = L.train(L.MlpSpec(2, (8,), 2), sched_xor, (Xx, yx), (Xv, yv))
        _, rep_linear = L.train(L.MlpSpec(2, (), 2), sched_xor, (Xx, yx), (Xv, yv))
        assert rep_hidden[-1].accuracy >= 0.95
        assert rep_linear[-1].accuracy <= 0.75


def test_criterion_6_tsne_properties():
    with criterion(6, "t-SNE properties"):
        # perplexity calibration entropy error per row
        rng = np.random.default_rng(5)
        Xc = rng.normal(0, 1, (40, 5))
        sq = E.pairwise_distances(Xc) ** 2
        target = np.log2(9.0)
        betas = np.ones(40)
        lo, hi = np.zeros(40), np.full(40, np.inf)
        for _ in range(150):
            H, _ = E._row_entropies(sq, betas)
            spread = H - target > 0
            lo = np.where(spread, betas, lo)
            hi = np.where(spread, hi, betas)
            betas = np.where(
                spread,
                np.where(np.isinf(hi), betas * 2, (betas + hi) / 2),
                np.where(lo == 0, betas / 2, (betas + lo) / 2),
            )
        H, _ = E._row_entropies(sq, betas)
        assert np.abs(H - target).max() < 1e-4
        # two separated clusters stay separable in the plane
        Xt, labels = two_clusters()
        emb = E.tsne(Xt, E.TsneConfig(perplexity=30, epsilon=10, iterations=500, seed=0))
        from sklearn.metrics import silhouette_score

        assert silhouette_score(emb.points, labels) > 0.5
        # small-n affinities match the brute-force formulas
        Xs = np.random.default_rng(7).normal(0, 1, (11, 3))
        P = E.perplexity_calibration(E.pairwise_distances(Xs), 3.0)
        assert np.abs(P - brute_force_joint_affinities(Xs, 3.0)).max() < 1e-10
        # determinism
        Xd, _ = two_clusters(n=60, d=5)
        cfg = E.TsneConfig(perplexity=10, iterations=300, seed=42)
        assert np.array_equal(E.tsne(Xd, cfg).points, E.tsne(Xd, cfg).points)


def test_criterion_7_explore_properties():
    with criterion(7, "explore properties"):
        # cross-section equals pointwise predictions exactly
        cs = X.cross_section(sign_oracle, unit_genotype(), 0, 3, [(0, 1), (0, 1)], (6, 6))
        for iy in range(6):
            for ix in range(6):
                assert cs.labels[iy, ix] == sign_oracle(cs.cell_genotype(ix, iy)).predicted
        # transitions located to 1e-3
        found = X.find_transitions(sign_oracle, unit_genotype(0.0), unit_genotype(1.0), 10)
        assert len(found) == 1 and found[0][0] == pytest.approx(0.5, abs=1e-3)
        found3 = X.find_transitions(three_band_oracle, unit_genotype(0.0), unit_genotype(1.0), 20)
        assert [pytest.approx(t, abs=1e-3) for t, _, _ in found3] == [0.3, 0.7]
        # every strategy respects bounds over 10,000 samples
        from speciescope.dataset import Evaluation, Genotype, Specimen

        rng = np.random.default_rng(9)
        parents = [
            Specimen(
                id=f"p{i}",
                genotype=Genotype(rng.random(12)),
                evaluation=Evaluation(score=int(rng.integers(0, 11))),
            )
            for i in range(6)
        ]
        mc_props, mc_stats = X.propose_montecarlo(
            score_oracle, 10_000, min_predicted_score=0.0, seed=3, max_attempts=20_000
        )
        batches = [
            X.propose_random(10_000, seed=0),
            X.propose_mutation(parents, 0.5, 10_000, seed=1),
            X.propose_crossover(parents, 10_000, seed=2),
            mc_props,
        ]
        for batch in batches:
            G_mat = np.stack([p.genotype.values for p in batch])
            assert np.all(G_mat >= 0.0) and np.all(G_mat <= 1.0)
        # Monte Carlo at threshold 0 is uniform sampling
        from scipy.stats import kstest

        G_mc = np.stack([p.genotype.values for p in mc_props])
        for d in range(12):
            assert kstest(G_mc[:, d], "uniform").statistic < 0.05


def test_criterion_8_service_round_trip(dataset_root, tmp_path):
    from fastapi.testclient import TestClient

    from speciescope.service import create_app

    root, kind = dataset_root
    with criterion(8, "service round trip"):
        service_root = tmp_path / "svc"
        service_root.mkdir()
        shutil.copy(root / "manifest.csv", service_root / "manifest.csv")
        manifest_rows = len((service_root / "manifest.csv").read_text().strip().split("\n")) - 1
        with TestClient(create_app(service_root)) as client:
            body = client.get("/api/specimens").json()
            assert len(body["specimens"]) == manifest_rows
            first_id = body["specimens"][0]["id"]
            payload = {
                "id": first_id,
                "score": 9,
                "category": "favourite",
                "request_id": "acc-1",
            }
            first = client.post("/api/evaluations", json=payload)
            assert first.status_code == 200
            dup = client.post("/api/evaluations", json=payload)
            assert dup.json()["seq"] == first.json()["seq"]
        lines = (service_root / "ledger.jsonl").read_text().strip().split("\n")
        assert len(lines) == 1
        # kill and restart: replay must reproduce the evaluation state
        with TestClient(create_app(service_root)) as reborn:
            spec = reborn.get(f"/api/specimens/{first_id}").json()
            assert spec["score"] == 9
            assert spec["category"] == "favourite"
