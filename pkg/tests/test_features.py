import numpy as np
import pytest

from speciescope import features as F
from speciescope.dataset import Dataset, Evaluation, Genotype, Specimen
from speciescope.errors import DataError
from speciescope.learn import MlpSpec, PredictorModel


def make_dataset(n=600, n_cats=3, seed=0):
    """Specimens whose category/score are recoverable from the features
    built by make_features (block-structured, linearly separable)."""
    rng = np.random.default_rng(seed)
    cats = [f"cat{i}" for i in range(n_cats)]
    specimens = []
    for i in range(n):
        c = i % n_cats
        score = int(np.clip(3 * c + rng.integers(0, 3), 0, 10))
        specimens.append(
            Specimen(
                id=f"s{i:03d}",
                genotype=Genotype(rng.random(12)),
                evaluation=Evaluation(score=score, category=cats[c]),
                split="train" if i % 4 else "validation",
            )
        )
    return Dataset(specimens)


def make_features(ds, seed=0, noise=0.1):
    """Block-structured features at a scale the paper's training schedule
    separates perfectly: 32 category dims + 32 score dims at magnitude 2."""
    rng = np.random.default_rng(seed)
    ids = [s.id for s in ds.specimens]
    X = rng.normal(0, noise, (len(ids), F.FEATURE_DIM))
    for i, s in enumerate(ds.specimens):
        c = int(s.category[-1])
        X[i, c * 32 : (c + 1) * 32] += 2.0
        X[i, 512 + 32 * s.score : 512 + 32 * (s.score + 1)] += 2.0
    return F.FeatureSet(ids=ids, matrix=X)


def stub_model(probs):
    """Linear head whose softmax output equals ``probs`` on a zero input."""
    probs = np.asarray(probs, dtype=np.float64)
    k = len(probs)
    logits = np.log(np.maximum(probs, 1e-12))
    params = [(np.zeros((F.FEATURE_DIM, k)), logits)]
    return PredictorModel(
        MlpSpec(F.FEATURE_DIM, (), k),
        params,
        [f"c{i}" for i in range(k)],
        "category",
    )


class TestSidecar:
    def test_binary_round_trip(self, tmp_path):
        ids = ["a", "b", "c"]
        matrix = np.random.default_rng(0).normal(0, 1, (3, F.FEATURE_DIM))
        path = tmp_path / "f.fvec"
        F.write_features(path, ids, matrix)
        fs = F.ingest_features(path)
        assert fs.ids == ids
        assert np.allclose(fs.matrix, matrix, atol=1e-6)  # f32 storage

    def test_csv_ingest_and_rejects(self, tmp_path):
        path = tmp_path / "f.csv"
        good = ",".join(["s0"] + ["0.5"] * F.FEATURE_DIM)
        short = ",".join(["s1"] + ["0.5"] * (F.FEATURE_DIM - 1))
        path.write_text(good + "\n" + short + "\n")
        fs = F.ingest_features(path)
        assert fs.ids == ["s0"]
        assert fs.rejected == [(2, f"vector length {F.FEATURE_DIM - 1} != {F.FEATURE_DIM}")]

    def test_unmatched_ids_reported(self, tmp_path):
        ds = make_dataset(n=8)
        ids = ["s000", "ghost"]
        path = tmp_path / "f.fvec"
        F.write_features(path, ids, np.zeros((2, F.FEATURE_DIM)))
        fs = F.ingest_features(path, ds)
        assert fs.unmatched == ["ghost"]

    def test_duplicate_id_fatal(self, tmp_path):
        path = tmp_path / "f.fvec"
        F.write_features(path, ["a", "a"], np.zeros((2, F.FEATURE_DIM)))
        with pytest.raises(DataError, match="duplicate"):
            F.ingest_features(path)

    def test_binary_wrong_dim_fatal(self, tmp_path):
        path = tmp_path / "f.fvec"
        import struct

        path.write_bytes(F.FVEC_MAGIC + struct.pack("<II", 0, 100))
        with pytest.raises(DataError, match="length"):
            F.ingest_features(path)


class TestHeads:
    def test_category_schedule_echo(self):
        assert F.CATEGORY_SCHEDULE == ((4, 1e-3), (4, 1e-5))

    def test_score_schedule_echo(self):
        assert F.SCORE_SCHEDULE == ((4, 1e-2), (4, 1e-3))

    def test_separable_categories_perfect(self):
        ds = make_dataset()
        fs = make_features(ds)
        model = F.train_category_head(fs, ds, seed=0)
        assert model.metrics["accuracy"] == 1.0
        assert model.labels == ["cat0", "cat1", "cat2"]

    def test_constant_scores_learned(self):
        ds = make_dataset()
        constant = Dataset(
            [
                Specimen(
                    id=s.id,
                    genotype=s.genotype,
                    evaluation=Evaluation(score=4, category=s.category),
                    split=s.split,
                )
                for s in ds.specimens
            ]
        )
        fs = make_features(constant)
        model = F.train_score_head(fs, constant, seed=0)
        for s in constant.subset("validation")[:10]:
            pred = F.predict(model, fs.vector(s.id))
            assert pred.predicted == "4"
            assert pred.expected_score == pytest.approx(4.0, abs=0.25)
        assert model.metrics["rmse"] < 0.25


class TestPredict:
    def test_confidence_is_top_margin(self):
        model = stub_model([0.7, 0.2, 0.1])
        pred = F.predict(model, np.zeros(F.FEATURE_DIM))
        assert pred.confidence == pytest.approx(0.5, abs=1e-9)
        assert pred.predicted == "c0"
        assert pred.distribution.sum() == pytest.approx(1.0, abs=1e-9)

    def test_uniform_confidence_zero(self):
        model = stub_model([0.25] * 4)
        pred = F.predict(model, np.zeros(F.FEATURE_DIM))
        assert pred.confidence == pytest.approx(0.0, abs=1e-12)

    def test_one_hot_limit(self):
        model = stub_model([1 - 1e-9, 5e-10, 5e-10])
        pred = F.predict(model, np.zeros(F.FEATURE_DIM))
        assert pred.confidence > 0.999

    def test_dimension_mismatch(self):
        model = stub_model([0.5, 0.5])
        with pytest.raises(DataError):
            F.predict(model, np.zeros(10))

    def test_pure_function(self):
        model = stub_model([0.6, 0.3, 0.1])
        x = np.random.default_rng(0).normal(0, 1, F.FEATURE_DIM)
        a, b = F.predict(model, x), F.predict(model, x)
        assert np.array_equal(a.distribution, b.distribution)


def fixed_predictions(confidences, predicted=None):
    preds = []
    for i, c in enumerate(confidences):
        label = (predicted or ["x"] * len(confidences))[i]
        preds.append(
            F.Prediction(
                labels=("x", "y"),
                distribution=np.array([0.5 + c / 2, 0.5 - c / 2]),
                predicted=label,
                confidence=c,
            )
        )
    return preds


class TestQuartiles:
    def test_all_correct(self):
        preds = fixed_predictions([0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2])
        acc = F.quartile_accuracy(preds, ["x"] * 8)
        assert np.array_equal(acc, np.ones(4))

    def test_partition_sizes_and_coverage(self):
        for n in (4, 7, 10, 13):
            confs = list(np.linspace(0.9, 0.1, n))
            preds = fixed_predictions(confs)
            ids = [f"s{i}" for i in range(n)]
            order = sorted(range(n), key=lambda i: (-preds[i].confidence, ids[i]))
            quartiles = np.array_split(np.array(order), 4)
            sizes = [len(q) for q in quartiles]
            assert max(sizes) - min(sizes) <= 1
            assert sorted(np.concatenate(quartiles)) == list(range(n))
            assert len(F.quartile_accuracy(preds, ["x"] * n, ids)) == 4

    def test_low_confidence_errors_land_in_bottom_quartile(self):
        confs = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.05, 0.01]
        truths = ["x"] * 6 + ["y", "y"]  # the two lowest-confidence are wrong
        acc = F.quartile_accuracy(fixed_predictions(confs), truths)
        assert np.array_equal(acc, np.array([1.0, 1.0, 1.0, 0.0]))

    def test_equal_confidence_tie_break_by_id(self):
        preds = fixed_predictions([0.5] * 4)
        ids = ["d", "c", "b", "a"]
        truths = ["x", "x", "y", "y"]  # correctness keyed to original order
        acc = F.quartile_accuracy(preds, truths, ids)
        # id order a,b,c,d -> original indices 3,2,1,0
        assert np.array_equal(acc, np.array([0.0, 0.0, 1.0, 1.0]))


class TestOrderByConfidence:
    def test_descending_within_group(self):
        preds = fixed_predictions([0.9, 0.5, 0.7], predicted=["g", "g", "g"])
        out = F.order_by_confidence(preds, ["p1", "p2", "p3"])
        assert out == [("g", ["p1", "p3", "p2"])]

    def test_empty_groups_omitted(self):
        preds = fixed_predictions([0.9, 0.5], predicted=["a", "b"])
        out = F.order_by_confidence(preds, ["p1", "p2"])
        assert [g for g, _ in out] == ["a", "b"]

    def test_tie_break_by_id(self):
        preds = fixed_predictions([0.5, 0.5, 0.5], predicted=["g", "g", "g"])
        out = F.order_by_confidence(preds, ["zz", "aa", "mm"])
        assert out == [("g", ["aa", "mm", "zz"])]
