import hashlib
import json

import numpy as np
import pytest

from speciescope import synth
from speciescope.cli import main, read_measures_csv


@pytest.fixture(scope="module")
def data_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    synth.build_dataset(root, n=220, seed=5, image_size=64)
    return root


@pytest.fixture(scope="module")
def manifest(data_root):
    return str(data_root / "manifest.csv")


@pytest.fixture(scope="module")
def measures_csv(data_root, manifest, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli-m") / "measures.csv"
    code = main(["measure", manifest, "--out", str(out), "--size", "64"])
    assert code == 0
    return str(out)


class TestMeasure:
    def test_header_comment_echoes_params(self, measures_csv):
        first = open(measures_csv).readline()
        assert first.startswith("#")
        assert "r_cg=5" in first and "delta=0.23" in first

    def test_row_count(self, measures_csv, manifest):
        records = read_measures_csv(measures_csv)
        n_manifest = len(open(manifest).readlines()) - 1
        assert len(records) == n_manifest == 220

    def test_empty_manifest_header_only(self, tmp_path):
        from speciescope.dataset import MANIFEST_COLUMNS

        m = tmp_path / "empty.csv"
        m.write_text(",".join(MANIFEST_COLUMNS) + "\n")
        out = tmp_path / "measures.csv"
        assert main(["measure", str(m), "--out", str(out)]) == 0
        lines = out.read_text().strip().split("\n")
        assert len(lines) == 2  # comment + header

    def test_missing_manifest_exit_2(self, tmp_path):
        assert main(["measure", str(tmp_path / "nope.csv"), "--out", "x.csv"]) == 2

    def test_bad_image_without_skip(self, tmp_path):
        from speciescope.dataset import MANIFEST_COLUMNS

        (tmp_path / "images").mkdir()
        (tmp_path / "images" / "bad.png").write_bytes(b"junk")
        row = ["s0", "images/bad.png"] + ["0.5"] * 12 + ["5", "brain", "train"]
        m = tmp_path / "m.csv"
        m.write_text(",".join(MANIFEST_COLUMNS) + "\n" + ",".join(row) + "\n")
        out = tmp_path / "out.csv"
        assert main(["measure", str(m), "--out", str(out)]) == 2
        assert main(["measure", str(m), "--out", str(out), "--skip-bad"]) == 0


class TestCorrelate:
    def test_matrix_symmetric_and_top_flagged(self, manifest, measures_csv, tmp_path, capsys):
        out = tmp_path / "corr.csv"
        code = main(
            ["correlate", manifest, "--measures", measures_csv, "--out", str(out), "--json"]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        values = np.array(payload["matrix"]["values"])
        assert np.allclose(values, values.T, atol=1e-12)
        assert payload["top_score_correlate"] == "acomplex"
        assert payload["max_p_value"] < 1e-10 or payload["max_p_value"] >= 0

    def test_exclude_category_variant(self, manifest, measures_csv, tmp_path, capsys):
        out = tmp_path / "corr2.csv"
        code = main(
            [
                "correlate", manifest, "--measures", measures_csv,
                "--out", str(out), "--exclude-category", "empty", "--json",
            ]
        )
        assert code == 0
        assert json.loads(capsys.readouterr().out)["n"] <= 220


class TestTrainAndMap:
    def test_seeded_training_identical_model_hashes(self, manifest, tmp_path):
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        for out in (a, b):
            code = main(
                ["train", manifest, "--kind", "tabular", "--target", "category",
                 "--out", str(out), "--seed", "1"]
            )
            assert code == 0
        assert (
            hashlib.sha256(a.read_bytes()).hexdigest()
            == hashlib.sha256(b.read_bytes()).hexdigest()
        )

    def test_map_outputs(self, manifest, tmp_path):
        model = tmp_path / "m.bin"
        assert main(["train", manifest, "--out", str(model), "--seed", "0"]) == 0
        out = tmp_path / "map"
        code = main(
            ["map", manifest, "--model", str(model), "--base-id", "syn00000",
             "--dim-x", "0", "--dim-y", "1", "--res", "8", "--out", str(out)]
        )
        assert code == 0
        assert (tmp_path / "map.png").exists()
        payload = json.loads((tmp_path / "map.json").read_text())
        assert payload["resolution"] == [8, 8]

    def test_map_same_dims_usage_error(self, manifest, tmp_path):
        model = tmp_path / "m2.bin"
        assert main(["train", manifest, "--out", str(model)]) == 0
        code = main(
            ["map", manifest, "--model", str(model), "--base-id", "syn00000",
             "--dim-x", "3", "--dim-y", "3", "--out", str(tmp_path / "x")]
        )
        assert code == 1


class TestEval:
    def test_prints_table(self, manifest, capsys):
        assert main(["eval", manifest]) == 0
        out = capsys.readouterr().out
        assert "tabular" in out
        assert "knn (k=1)" in out

    def test_json_report(self, manifest, capsys, tmp_path):
        out = tmp_path / "bench.csv"
        assert main(["eval", manifest, "--json", "--out", str(out)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert "tabular" in payload and "knn" in payload
        rows = out.read_text().strip().split("\n")
        assert rows[0] == "predictor,target,metric,value,config_hash"


class TestEmbedAndPropose:
    def test_embed_genotype(self, manifest, tmp_path, capsys):
        out = tmp_path / "emb"
        code = main(
            ["embed", manifest, "--iterations", "250", "--out", str(out), "--json"]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["perplexity"] == 60.0
        assert (tmp_path / "emb.csv").exists() and (tmp_path / "emb.json").exists()

    def test_propose_random_batch(self, tmp_path):
        out = tmp_path / "props.json"
        code = main(
            ["propose", "--strategy", "random", "--n", "5", "--seed", "3",
             "--out", str(out), "--render-dir", str(tmp_path / "renders")]
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert len(payload["proposals"]) == 5
        assert len(list((tmp_path / "renders").glob("*.png"))) == 5

    def test_propose_montecarlo_with_model(self, manifest, tmp_path):
        model = tmp_path / "score.bin"
        assert main(
            ["train", manifest, "--target", "score", "--out", str(model)]
        ) == 0
        out = tmp_path / "mc.json"
        code = main(
            ["propose", "--strategy", "montecarlo", "--model", str(model),
             "--n", "4", "--min-score", "1", "--out", str(out)]
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["stats"]["kept"] == 4

    def test_propose_montecarlo_category_constrained(self, manifest, tmp_path):
        model = tmp_path / "cat.bin"
        assert main(["train", manifest, "--target", "category", "--out", str(model)]) == 0
        out = tmp_path / "mc-cat.json"
        code = main(
            ["propose", "--strategy", "montecarlo", "--model", str(model),
             "--require-category", "blobs", "--n", "3", "--out", str(out),
             "--max-attempts", "2000"]
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert all(
            p["predicted"]["predicted"] == "blobs" for p in payload["proposals"]
        )

    def test_unknown_strategy_data_error(self, tmp_path):
        assert main(["propose", "--strategy", "warp", "--out", str(tmp_path / "x.json")]) == 2


class TestUsage:
    def test_missing_subcommand(self):
        assert main([]) == 1

    def test_unknown_flag(self):
        assert main(["measure", "--bogus"]) == 1
