import json
import sys

import numpy as np
import pytest

from csdkit.cli import build_parser, derive_seed, main

from conftest import clustered_rows, unit_rows


@pytest.fixture
def workspace(tmp_path, rng):
    """Corpus + embeddings JSONL for three 10-sentence articles."""
    corpus = tmp_path / "corpus.jsonl"
    emb = tmp_path / "emb.jsonl"
    with open(corpus, "w") as cf, open(emb, "w") as ef:
        for a in range(3):
            rows = clustered_rows(rng, 10, 16, n_centers=2, spread=0.35)
            cf.write(
                json.dumps(
                    {
                        "id": f"art{a}",
                        "sentences": [f"Sentence {i} of {a}." for i in range(10)],
                        "rater_scores": [2 + a, 3 + a],
                    }
                )
                + "\n"
            )
            ef.write(
                json.dumps(
                    {
                        "id": f"art{a}",
                        "model": "synthetic",
                        "dim": 16,
                        "vectors": [r.tolist() for r in rows],
                    }
                )
                + "\n"
            )
    return tmp_path, corpus, emb


def run(*argv) -> int:
    return main([str(a) for a in argv])


class TestParser:
    def test_usage_error_exits_one(self, capsys):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["csd1"])  # missing required flags
        assert exc.value.code == 1

    def test_unknown_subcommand_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["frobnicate"])
        assert exc.value.code == 1

    def test_help_exits_zero(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["--help"])
        assert exc.value.code == 0

    def test_derive_seed_stable(self):
        assert derive_seed(42, 1, 2) == derive_seed(42, 1, 2)
        assert derive_seed(42, 1, 2) != derive_seed(42, 2, 1)


class TestCsd1Command:
    def test_exact_small_article_row_count(self, workspace):
        tmp, corpus, emb = workspace
        out = tmp / "out"
        assert run("csd1", "--corpus", corpus, "--embeddings", emb,
                   "--article", "art0", "--exact", "--out", out) == 0
        csv = (out / "csd1_art0_c0.3.csv").read_text().strip().split("\n")
        assert len(csv) == 121  # header + C(10,3)
        doc = json.loads((out / "csd1_art0_c0.3.json").read_text())
        assert doc["mode"] == "exact" and doc["sample_count"] == 120

    def test_missing_embeddings_is_data_error(self, workspace):
        tmp, corpus, _ = workspace
        code = run("csd1", "--corpus", corpus, "--embeddings", tmp / "nope.jsonl",
                   "--out", tmp / "o")
        assert code == 2

    def test_unknown_article_is_data_error(self, workspace):
        tmp, corpus, emb = workspace
        code = run("csd1", "--corpus", corpus, "--embeddings", emb,
                   "--article", "ghost", "--out", tmp / "o")
        assert code == 2


class TestDeterminism:
    def test_same_seed_byte_identical_and_jobs_independent(self, workspace):
        tmp, corpus, emb = workspace
        for name, jobs in (("r1", 1), ("r2", 1), ("r4", 4)):
            assert run("csd1", "--corpus", corpus, "--embeddings", emb,
                       "--article", "art1", "--size-frac", "0.3",
                       "--blocks", "80+80", "--seed", "7", "--jobs", jobs,
                       "--out", tmp / name) == 0
        base = (tmp / "r1" / "csd1_art1_c0.3.csv").read_bytes()
        assert (tmp / "r2" / "csd1_art1_c0.3.csv").read_bytes() == base
        assert (tmp / "r4" / "csd1_art1_c0.3.csv").read_bytes() == base
        basej = (tmp / "r1" / "csd1_art1_c0.3.json").read_bytes()
        assert (tmp / "r4" / "csd1_art1_c0.3.json").read_bytes() == basej

    def test_different_seed_changes_sampled_output(self, workspace, tmp_path):
        tmp, corpus, emb = workspace
        for name, seed in (("s1", 1), ("s2", 2)):
            # 30+30 draws of C(10,3)=120 blocks: genuinely sampled, seed-sensitive
            assert run("csd1", "--corpus", corpus, "--embeddings", emb,
                       "--article", "art1", "--blocks", "30+30", "--seed", seed,
                       "--out", tmp / name) == 0
        a = (tmp / "s1" / "csd1_art1_c0.3.csv").read_bytes()
        b = (tmp / "s2" / "csd1_art1_c0.3.csv").read_bytes()
        assert a != b


class TestPipelineCommands:
    def test_csd2_and_aggregate(self, workspace):
        tmp, corpus, emb = workspace
        out = tmp / "c2"
        assert run("csd2", "--corpus", corpus, "--embeddings", emb, "--out", out) == 0
        curves = sorted(out.glob("csd2_*.json"))
        assert len(curves) == 3
        assert run("aggregate", "--kind", "csd2", "--stat", "median",
                   "--out", tmp / "agg2", *curves) == 0
        doc = json.loads((tmp / "agg2.json").read_text())
        assert doc["members"] == 3 and len(doc["values"]) == 100

    def test_segments_and_fit_beta(self, workspace, capsys):
        tmp, corpus, emb = workspace
        out = tmp / "seg"
        run("csd1", "--corpus", corpus, "--embeddings", emb, "--article", "art0",
            "--exact", "--out", out)
        curve = out / "csd1_art0_c0.3.json"
        assert run("segments", "--curve", curve, "--out", tmp / "seg.json") == 0
        seg = json.loads((tmp / "seg.json").read_text())
        assert 0.0 < seg["l_end"] < seg["r_start"] < 1.0
        assert run("fit-beta", "--curve", curve, "--out", tmp / "fit.json",
                   "--plot", tmp / "fit.png") == 0
        fit = json.loads((tmp / "fit.json").read_text())
        assert set(fit) == {"a", "b", "alpha", "beta", "rmse"}
        assert (tmp / "fit.png").stat().st_size > 1000

    def test_aggregate_csd1(self, workspace):
        tmp, corpus, emb = workspace
        out = tmp / "all"
        run("csd1", "--corpus", corpus, "--embeddings", emb, "--exact", "--out", out)
        curves = sorted(out.glob("csd1_*.json"))
        assert run("aggregate", "--stat", "mean", "--out", tmp / "agg", *curves) == 0
        agg = json.loads((tmp / "agg.json").read_text())
        assert agg["members"] == 3

    def test_baseline_scramble(self, tmp_path, rng):
        corpus = tmp_path / "src.jsonl"
        with open(corpus, "w") as fh:
            for i in range(25):
                fh.write(json.dumps({"id": f"s{i}", "text": "Alpha. Beta. Gamma."}) + "\n")
        assert run("baseline-scramble", "--corpus", corpus, "--count", "3",
                   "--seed", "3", "--out", tmp_path / "scr.jsonl") == 0
        lines = (tmp_path / "scr.jsonl").read_text().strip().split("\n")
        assert len(lines) == 3
        first = json.loads(lines[0])
        assert len(first["sentences"]) == 20
        assert "sources" in first

    def test_features_train_predict_eval(self, workspace, capsys):
        tmp, corpus, emb = workspace
        feats = tmp / "features.jsonl"
        assert run("features", "--corpus", corpus, "--embeddings", emb,
                   "--samples", "100", "--seed", "1", "--out", feats) == 0
        rows = [json.loads(l) for l in feats.read_text().strip().split("\n")]
        assert len(rows) == 3 and len(rows[0]["values"]) == 90
        assert all("label" in r for r in rows)
        # too few essays for a split: train on everything
        assert run("train", "--features", feats, "--model", tmp / "model.json",
                   "--train-frac", "1.0") == 0
        assert run("predict", "--model", tmp / "model.json", "--features", feats,
                   "--out", tmp / "preds.jsonl") == 0
        assert run("eval", "--preds", tmp / "preds.jsonl",
                   "--out", tmp / "metrics.json") == 0
        metrics = json.loads((tmp / "metrics.json").read_text())
        assert set(metrics) == {"0.0", "0.5", "1.0"}

    def test_eval_perfect_predictions(self, tmp_path, capsys):
        preds = tmp_path / "p.jsonl"
        with open(preds, "w") as fh:
            for i, lab in enumerate((1.0, 2.0, 3.0)):
                fh.write(json.dumps({"id": f"e{i}", "pred": lab, "label": lab}) + "\n")
        assert run("eval", "--preds", preds) == 0
        doc = json.loads(capsys.readouterr().out)
        assert all(doc[t]["hit_rate"] == 1.0 for t in ("0.0", "0.5", "1.0"))

    def test_csd1_with_provider_url_fetches_and_caches(self, tmp_path, stub_provider):
        from conftest import StubProvider

        corpus = tmp_path / "corpus.jsonl"
        with open(corpus, "w") as fh:
            fh.write(json.dumps({"id": "p1", "sentences": [f"S{i}." for i in range(8)]}) + "\n")
        cache = tmp_path / "cache.csde"
        out = tmp_path / "out"
        assert run("csd1", "--corpus", corpus, "--embeddings", cache,
                   "--provider-url", stub_provider, "--exact", "--out", out) == 0
        assert StubProvider.requests_seen == 1
        assert cache.exists()
        # warm cache: repeat run issues no further requests
        assert run("csd1", "--corpus", corpus, "--embeddings", cache,
                   "--provider-url", stub_provider, "--exact", "--out", tmp_path / "o2") == 0
        assert StubProvider.requests_seen == 1

    def test_embed_fetch_command(self, tmp_path, stub_provider):
        corpus = tmp_path / "corpus.jsonl"
        with open(corpus, "w") as fh:
            for i in range(3):
                fh.write(json.dumps({"id": f"d{i}", "text": "One. Two."}) + "\n")
        store = tmp_path / "store.csde"
        assert run("embed-fetch", "--corpus", corpus, "--store", store,
                   "--provider-url", stub_provider) == 0
        from csdkit.ingest import load_embeddings

        loaded = load_embeddings(store)
        assert sorted(loaded.matrices) == ["d0", "d1", "d2"]

    def test_plot_data_writes_csv_json_png(self, workspace):
        tmp, corpus, emb = workspace
        out = tmp / "pd"
        run("csd1", "--corpus", corpus, "--embeddings", emb, "--exact", "--out", out)
        curves = sorted(out.glob("csd1_*.json"))
        assert run("plot-data", "--out", tmp / "fig", "--labels", "a,b,c", *curves) == 0
        csv = (tmp / "fig.csv").read_text().strip().split("\n")
        assert csv[0] == "x,a,b,c" and len(csv) == 101
        assert (tmp / "fig.png").stat().st_size > 1000
        doc = json.loads((tmp / "fig.json").read_text())
        assert set(doc["series"]) == {"a", "b", "c"}
