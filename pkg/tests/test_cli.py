"""Tests for the experiment config and the command-line pipeline."""
import json

import pytest

from churnvec.cli import main
from churnvec.config import OUT_DIR_ENV, ExperimentConfig, load_config

SMALL = {
    "cohort": {"n_users": 120},
    "features": {"window": 6},
    "comparison": {"families": ["Lasso", "DecisionTree"], "seeds": [0], "budget": 3, "n_init": 2,
                   "max_train_examples": 300, "max_validation_examples": 100},
}


def _config(tmp_path, **overrides):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({**SMALL, **overrides}))
    return str(path)


def _run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = _config(tmp)
    out = tmp / "out"
    for c in ("generate", "extract", "label"):
        assert _run(c, "--config", cfg, "--out", out) == 0
    assert _run("compare", "--config", cfg, "--out", out, "--quiet") == 0
    return cfg, out


class TestConfig:
    def test_defaults_round_trip(self):
        cfg = ExperimentConfig()
        cfg.validate()
        assert ExperimentConfig.from_dict(json.loads(cfg.dumps())) == cfg

    def test_file_round_trip(self, tmp_path):
        cfg = load_config(_config(tmp_path))
        again = tmp_path / "again.json"
        again.write_text(cfg.dumps())
        assert load_config(again) == cfg
        assert load_config(again).dumps() == cfg.dumps()

    @pytest.mark.parametrize("doc", [{"sed": 1}, {"features": {"windw": 3}}, {"comparison": {"budgt": 2}},
                                     {"cohort": {"n_user": 5}}, {"labels": {"tau": "median"}},
                                     {"cohort": {"rng_seed": 3}}])
    def test_invalid_documents(self, doc):
        with pytest.raises((KeyError, ValueError)):
            ExperimentConfig.from_dict(doc)

    def test_env_override_of_out_dir(self, monkeypatch, tmp_path):
        cfg = ExperimentConfig()
        monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "env"))
        assert cfg.path("events") == tmp_path / "env" / "events.jsonl"
        assert cfg.path("events", str(tmp_path / "flag")) == tmp_path / "flag" / "events.jsonl"


class TestPipeline:
    def test_complete_grid(self, built):
        _, out = built
        rows = (out / "report.csv").read_text().splitlines()[1:]
        cells = {tuple(r.split(",")[:3]) for r in rows}
        assert len(cells) == 2 * 2 * 2
        assert all(r.split(",")[3] != "skipped" for r in rows)
        for name in ("events.jsonl", "features.csv", "labeled.csv", "report.json", "report_regression.svg"):
            assert (out / name).exists() and (out / (name + ".meta.json")).exists()

    def test_sidecars_embed_upstream_hashes(self, built):
        _, out = built
        feat = json.loads((out / "features.csv.meta.json").read_text())
        ev = json.loads((out / "events.jsonl.meta.json").read_text())
        assert feat["inputs"]["events.jsonl"] == ev["sha256"]
        lab = json.loads((out / "labeled.csv.meta.json").read_text())
        assert lab["inputs"]["features.csv"] == feat["sha256"]

    def test_rerun_is_byte_identical(self, built, tmp_path):
        cfg, out = built
        again = tmp_path / "again"
        for c in ("generate", "extract", "label"):
            assert _run(c, "--config", cfg, "--out", again) == 0
        assert _run("compare", "--config", cfg, "--out", again, "--quiet") == 0
        for p in sorted(out.iterdir()):
            if (again / p.name).exists():
                assert (again / p.name).read_bytes() == p.read_bytes(), p.name

    def test_report_reproduces_compare_csv(self, built, tmp_path):
        _, out = built
        assert _run("report", "--report", out / "report.json", "--out", tmp_path) == 0
        assert (tmp_path / "report.csv").read_bytes() == (out / "report.csv").read_bytes()
        assert (tmp_path / "report_classification.svg").read_bytes() == \
            (out / "report_classification.svg").read_bytes()

    def test_tune_then_train(self, built, capsys):
        cfg, out = built
        args = ("--config", cfg, "--out", out, "--family", "Lasso", "--target", "vector", "--task", "reg")
        assert _run("tune", *args) == 0
        trials = (out / "trials_Lasso_vector_regression.csv").read_text().splitlines()
        assert trials[0] == "trial,params_json,objective,seconds,status" and len(trials) == 4
        best = out / "best_Lasso_vector_regression.json"
        assert _run("train", *args, "--params", best) == 0
        line = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert line["family"] == "Lasso" and 0 < line["r2"] <= 1
        model = (out / "model_Lasso_vector_regression.txt").read_bytes()
        assert _run("train", *args, "--params", best) == 0
        assert (out / "model_Lasso_vector_regression.txt").read_bytes() == model

    def test_seed_flag_changes_cohort(self, built, tmp_path):
        cfg, out = built
        assert _run("generate", "--config", cfg, "--out", tmp_path, "--seed", 7) == 0
        assert (tmp_path / "events.jsonl").read_bytes() != (out / "events.jsonl").read_bytes()


class TestErrors:
    def _err(self, capsys):
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1 and err[0].startswith("churnvec: error: ")
        return err[0]

    def test_unknown_family_lists_valid_set(self, built, capsys):
        cfg, out = built
        assert _run("train", "--config", cfg, "--out", out, "--family", "Xgb", "--target", "day",
                    "--task", "reg") != 0
        err = self._err(capsys)
        assert "Xgb" in err and "Lasso" in err and "AttentionNet" in err

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = _config(tmp_path, extra_key=1)
        assert _run("generate", "--config", cfg, "--out", tmp_path) != 0
        assert "extra_key" in self._err(capsys)

    def test_missing_upstream(self, tmp_path, capsys):
        assert _run("extract", "--config", _config(tmp_path), "--out", tmp_path / "empty") != 0
        assert "missing" in self._err(capsys)

    def test_usage_error(self, capsys):
        assert _run("frobnicate") == 2
        self._err(capsys)

    def test_fingerprint_mismatch_aborts(self, built, tmp_path, capsys):
        cfg, out = built
        work = tmp_path / "w"
        for c in ("generate", "extract"):
            assert _run(c, "--config", cfg, "--out", work) == 0
        # regenerate events with another seed: the features are now stale
        assert _run("generate", "--config", cfg, "--out", work, "--seed", 5) == 0
        assert _run("label", "--config", cfg, "--out", work) != 0
        assert "FingerprintMismatch" in self._err(capsys)

    def test_edited_artifact_detected(self, built, tmp_path, capsys):
        cfg, out = built
        work = tmp_path / "w"
        assert _run("generate", "--config", cfg, "--out", work) == 0
        with open(work / "events.jsonl", "a") as fh:
            fh.write('{"user":"zz","day":1,"kind":"login","session_seconds":5}\n')
        assert _run("extract", "--config", cfg, "--out", work) != 0
        assert "FingerprintMismatch" in self._err(capsys)
