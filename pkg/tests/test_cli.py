import json
from pathlib import Path

import pytest

from hiprompt.cli import (
    _coerce,
    known_keys,
    main,
    parse_kv_file,
    parse_overrides,
)

FAST = [
    "--train.max_epochs=2",
    "--train.batch_size=8",
    "--train.learning_rate=1e-3",
    "--encoder.dim=16",
    "--encoder.num_blocks=1",
    "--encoder.num_heads=2",
    "--encoder.ffn_dim=32",
    "--encoder.max_len=64",
    "--encoder.dropout=0.0",
]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synthdata")
    rc = main([
        "synth", "--out", str(out),
        "--synth.branching=2,2", "--synth.samples_per_leaf=6",
    ])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, data_dir):
    out = tmp_path_factory.mktemp("trainrun")
    rc = main(["train", "--data", str(data_dir), "--out", str(out), *FAST])
    assert rc == 0
    return out


class TestConfigParsing:
    def test_coerce(self):
        assert _coerce("k", "true") is True
        assert _coerce("k", "None") is None
        assert _coerce("k", "16") == 16
        assert _coerce("k", "3e-5") == pytest.approx(3e-5)
        assert _coerce("k", "0,1,2") == (0, 1, 2)
        assert _coerce("k", "same-depth") == "same-depth"

    def test_kv_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\ntrain.batch_size=16\nmodel.scheme=random\n")
        assert parse_kv_file(cfg) == {
            "train.batch_size": 16,
            "model.scheme": "random",
        }

    def test_overrides_both_forms(self):
        got = parse_overrides(["--train.seed=3", "--model.use_mlm", "false"])
        assert got == {"train.seed": 3, "model.use_mlm": False}

    def test_known_keys_cover_sections(self):
        keys = known_keys()
        assert "train.batch_size" in keys
        assert "model.loss_kind" in keys
        assert "encoder.dim" in keys
        assert "eval.path_consistency" in keys
        assert "synth.branching" in keys
        assert "lowres.fraction" in keys

    def test_unknown_key_fails_fast(self, data_dir, tmp_path, capsys):
        rc = main([
            "train", "--data", str(data_dir), "--out", str(tmp_path),
            "--train.batchsize=8",
        ])
        assert rc == 2
        assert "unknown config keys" in capsys.readouterr().err

    def test_flags_win_over_config_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("train.seed=1\n")
        from hiprompt.cli import resolve_settings

        class Args:
            config = str(cfg)

        assert resolve_settings(Args(), ["--train.seed=9"])["train.seed"] == 9


class TestSynth:
    def test_artifacts(self, data_dir):
        for name in ("taxonomy.tsv", "train.jsonl", "dev.jsonl", "test.jsonl",
                     "run_manifest.json"):
            assert (data_dir / name).exists()
        manifest = json.loads((data_dir / "run_manifest.json").read_text())
        assert manifest["command"] == "synth"


class TestTrainEval:
    def test_train_artifacts(self, trained_dir):
        for name in ("metrics.json", "metrics.tsv", "training_curves.png",
                     "depth_clusters.png", "frequency_clusters.png",
                     "run_manifest.json"):
            assert (trained_dir / name).exists()
        ckpt = trained_dir / "checkpoint"
        for name in ("model.pt", "vocab.txt", "taxonomy.tsv", "manifest.json"):
            assert (ckpt / name).exists()

    def test_metrics_json_shape(self, trained_dir):
        payload = json.loads((trained_dir / "metrics.json").read_text())
        m = payload["metrics"]
        assert 0.0 <= m["micro_f1"] <= 1.0
        assert len(m["loss_curve"]) == 2
        assert payload["config"]["batch_size"] == 8

    def test_eval_reproduces_test_metrics(self, trained_dir, data_dir, tmp_path):
        rc = main([
            "eval", "--checkpoint", str(trained_dir / "checkpoint"),
            "--test", str(data_dir / "test.jsonl"), "--out", str(tmp_path),
        ])
        assert rc == 0
        train_m = json.loads((trained_dir / "metrics.json").read_text())["metrics"]
        eval_m = json.loads((tmp_path / "metrics.json").read_text())["metrics"]
        assert eval_m["micro_f1"] == pytest.approx(train_m["micro_f1"])
        assert eval_m["macro_f1"] == pytest.approx(train_m["macro_f1"])

    def test_missing_checkpoint_is_reported(self, tmp_path, capsys):
        rc = main([
            "eval", "--checkpoint", str(tmp_path / "nope"),
            "--test", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o"),
        ])
        assert rc == 2
        assert "error" in capsys.readouterr().err


class TestAblate:
    def test_bce_loss_variant_recorded(self, data_dir, tmp_path, capsys):
        rc = main([
            "ablate", "--variant", "bce-loss", "--data", str(data_dir),
            "--out", str(tmp_path), *FAST,
        ])
        assert rc == 0
        assert "ablation variant: bce-loss" in capsys.readouterr().out
        manifest = json.loads((tmp_path / "run_manifest.json").read_text())
        assert manifest["ablation_variant"] == "bce-loss"
        assert manifest["config"]["loss_kind"] == "bce"

    def test_random_connection_seed_determinism(self, data_dir, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            rc = main([
                "ablate", "--variant", "random-connection", "--seed", "7",
                "--data", str(data_dir), "--out", str(out), *FAST,
            ])
            assert rc == 0
            outs.append(json.loads((out / "metrics.json").read_text())["metrics"])
        assert outs[0]["micro_f1"] == outs[1]["micro_f1"]
        assert outs[0]["loss_curve"] == outs[1]["loss_curve"]

    def test_unknown_variant_rejected(self, data_dir, tmp_path):
        with pytest.raises(SystemExit):
            main([
                "ablate", "--variant", "frobnicate", "--data", str(data_dir),
                "--out", str(tmp_path),
            ])


class TestInspection:
    def test_neighbors(self, trained_dir, tmp_path, capsys):
        ckpt = trained_dir / "checkpoint"
        taxonomy = (ckpt / "taxonomy.tsv").read_text().strip().splitlines()
        label = taxonomy[0].split("\t")[1]
        rc = main([
            "neighbors", "--checkpoint", str(ckpt), "--label", label,
            "-k", "5", "--out", str(tmp_path),
        ])
        assert rc == 0
        lines = (tmp_path / "neighbors.tsv").read_text().strip().splitlines()
        assert lines[0] == "rank\tword\tcosine"
        assert len(lines) == 6

    def test_neighbors_unknown_label(self, trained_dir, tmp_path, capsys):
        rc = main([
            "neighbors", "--checkpoint", str(trained_dir / "checkpoint"),
            "--label", "NoSuchLabel", "--out", str(tmp_path),
        ])
        assert rc == 2

    def test_clusters_depth(self, trained_dir, tmp_path):
        rc = main([
            "clusters", "--metrics", str(trained_dir / "metrics.json"),
            "--mode", "depth",
            "--taxonomy", str(trained_dir / "checkpoint" / "taxonomy.tsv"),
            "--out", str(tmp_path),
        ])
        assert rc == 0
        assert (tmp_path / "clusters_depth.tsv").exists()
        assert (tmp_path / "clusters_depth.png").exists()

    def test_clusters_frequency_without_taxonomy(self, trained_dir, tmp_path):
        rc = main([
            "clusters", "--metrics", str(trained_dir / "metrics.json"),
            "--mode", "frequency", "--out", str(tmp_path),
        ])
        assert rc == 0
        assert (tmp_path / "clusters_frequency.tsv").exists()

    def test_clusters_depth_needs_taxonomy(self, trained_dir, tmp_path, capsys):
        rc = main([
            "clusters", "--metrics", str(trained_dir / "metrics.json"),
            "--mode", "depth", "--out", str(tmp_path),
        ])
        assert rc == 2


class TestLowres:
    def test_smoke(self, data_dir, tmp_path, capsys):
        rc = main([
            "lowres", "--data", str(data_dir), "--out", str(tmp_path),
            "--lowres.fraction=0.5", "--lowres.seeds=0,1",
            "--train.max_epochs=1", *FAST[1:],
        ])
        assert rc == 0
        payload = json.loads((tmp_path / "lowres.json").read_text())
        assert payload["summary"]["seeds"] == [0, 1]
        assert (tmp_path / "lowres.png").exists()


class TestOutputRoot:
    def test_env_var_root(self, monkeypatch, tmp_path):
        monkeypatch.setenv("HIPROMPT_OUT", str(tmp_path))
        rc = main(["synth", "--synth.samples_per_leaf=0"])
        assert rc == 0
        assert (Path(tmp_path) / "runs" / "synth" / "taxonomy.tsv").exists()
