import csv
import json

import pytest

from reviewnet.cli import main
from reviewnet.config import ConfigError, RunConfig, load_config

FAST = ["--set", "max_epochs=25", "--set", "ego_budget=32", "--set", "walks_per_node=2", "--set", "svm_epochs=200"]


# ------------------------------------------------------------------- config
def test_defaults():
    cfg = RunConfig()
    assert (cfg.seed, cfg.lr, cfg.weight_decay, cfg.hidden, cfg.dropout, cfg.patience) == (72, 0.005, 5e-4, 8, 0.3, 200)
    assert (cfg.delta, cfg.window_count, cfg.max_sample, cfg.min_spam) == (0.3, 10, 1000, 0.6)
    assert (cfg.gamma, cfg.lam, cfg.damping, cfg.alpha_eq8) == (0.5, 0.2, 0.85, 0.5)


def test_config_rejects_unknown_and_non_simplex(tmp_path):
    bad = tmp_path / "c.json"
    bad.write_text(json.dumps({"learning_rate": 0.1}))
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        RunConfig(alpha1=0.9)


def test_toml_config_and_override_precedence(tmp_path):
    f = tmp_path / "run.toml"
    f.write_text("seed = 5\nlr = 0.01\n")
    cfg = load_config(f, {"seed": 9})
    assert (cfg.seed, cfg.lr) == (9, 0.01)


# ---------------------------------------------------------------- pipeline
@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert main(["--seed", "11", "synth", "--out", str(data), "--reviewers", "300", "--products", "60",
                 "--days", "30", "--groups", "3", "--group-size", "8", "--organic-rate", "0.3"]) == 0
    assert main(["ingest", str(data / "reviews.jsonl"), "--out", str(root / "graph.json")]) == 0
    assert main(FAST + ["nfs", str(root / "graph.json"), "--labels", str(data / "labels.csv"),
                        "--out", str(root / "nfs")]) == 0
    return root


def test_ingest_prints_before_after(workspace, capsys):
    assert main(["ingest", str(workspace / "data" / "reviews.jsonl"), "--out", str(workspace / "g2.json")]) == 0
    out = capsys.readouterr().out
    assert "before" in out.lower() and "after" in out.lower()
    assert (workspace / "g2.json").read_bytes() == (workspace / "graph.json").read_bytes()


def test_nfs_outputs(workspace):
    d = workspace / "nfs"
    for name in ("profiles.json", "nfs_model.json", "nfs_scores.csv", "manifest_nfs.json"):
        assert (d / name).exists()
    assert json.loads((d / "manifest_nfs.json").read_text())["config"]["ego_budget"] == 32


def test_train_score_eval(workspace):
    g, data, d = workspace / "graph.json", workspace / "data", workspace / "nfs"
    args = FAST + ["train", str(g), "--labels", str(data / "labels.csv"), "--nfs", str(d / "nfs_model.json"),
                   "--profiles", str(d / "profiles.json")]
    assert main(args + ["--out", str(workspace / "t1")]) == 0
    assert main(args + ["--out", str(workspace / "t2")]) == 0
    for name in ("model.json", "history.csv", "supernodes.csv", "superedges.csv"):
        assert (workspace / "t1" / name).read_bytes() == (workspace / "t2" / name).read_bytes()

    scores = workspace / "scores.csv"
    assert main(FAST + ["score", str(g), "--model", str(workspace / "t1" / "model.json"), "--nfs",
                        str(d / "nfs_model.json"), "--profiles", str(d / "profiles.json"),
                        "--groups", str(workspace / "groups.csv"), "--out", str(scores)]) == 0
    rows = list(csv.DictReader(scores.open()))
    assert rows and set(rows[0]) >= {"reviewer_id", "score"}

    report = workspace / "report.csv"
    assert main(FAST + ["eval", str(g), "--labels", str(data / "labels.csv"), "--profiles", str(d / "profiles.json"),
                        "--ablation", "full,D", "--out", str(report)]) == 0
    lines = report.read_text().splitlines()
    assert lines[0] == "variant,split,accuracy,recall,f1_macro,auroc"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["full", "D_nfs_only"]


def test_dynamics_components(capsys):
    assert main(["dynamics", "--components", "0.45,0.28,0.35,0.19", "--components", "0.85,0.79,0.81,0.65"]) == 0
    out = capsys.readouterr().out
    assert "0.3175" in out and "0.7750" in out


def test_dynamics_on_graph(workspace, capsys):
    assert main(["dynamics", str(workspace / "graph.json")]) == 0
    assert "D = " in capsys.readouterr().out


# ---------------------------------------------------------------- failures
def test_missing_input_exit_code(tmp_path):
    assert main(["ingest", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "g.json")]) == 2


def test_empty_input_exit_code(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert main(["ingest", str(empty), "--out", str(tmp_path / "g.json")]) == 2


def test_bad_config_exit_code(tmp_path):
    assert main(["--set", "alpha1=0.9", "dynamics", "--components", "0.1,0.1,0.1,0.1"]) == 2


def test_missing_labels_exit_code(workspace, tmp_path):
    assert main(["nfs", str(workspace / "graph.json"), "--out", str(tmp_path / "n")]) == 2


def test_infeasible_synth_exit_code(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "s"), "--reviewers", "10", "--groups", "5"]) == 2
