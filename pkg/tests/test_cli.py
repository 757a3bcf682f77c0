import csv

import pytest
import yaml

from cuberl import cli
from conftest import ORACLE_PATH
from test_harness import TINY_RUN


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump({**TINY_RUN, "oracle_path": str(ORACLE_PATH)}))
    return str(path)


def test_oracle_stats(config, capsys):
    assert cli.main(["oracle", "stats", "--config", config]) == 0
    out = capsys.readouterr().out
    assert "states   3674160" in out and "diameter 14" in out


def test_warmup_train_eval(config, tmp_path, capsys):
    ckpt = tmp_path / "fc.ckpt"
    assert cli.main(["--seed", "3", "warmup", "--config", config, "--variant", "fc", "--iters", "4",
                     "--twists", "5", "--dataset-size", "40", "--out", str(ckpt)]) == 0
    with open(ckpt.with_suffix(".loss.csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4 and list(rows[0]) == ["iteration", "mean_loss"]

    out_dir = tmp_path / "run"
    assert cli.main(["train", "--config", config, "--cost-ckpt", str(ckpt), "--iters", "2", "--buffer", "16",
                     "--eps", "0.2", "--seed", "1", "--out-dir", str(out_dir)]) == 0
    with open(out_dir / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["iteration"] for r in rows] == ["0", "1"]
    assert list(rows[0]) == ["iteration", "mean_reward", "success_rate"]

    # the tiny policy is far below the thresholds: --strict turns that into exit code 1
    assert cli.main(["eval", "success", "--config", config, "--actor-ckpt", str(out_dir / "actor.ckpt"),
                     "--n-tests", "20"]) == 0
    assert cli.main(["eval", "success", "--config", config, "--actor-ckpt", str(out_dir / "actor.ckpt"),
                     "--n-tests", "20", "--strict"]) == 1
    assert cli.main(["eval", "spearman", "--config", config, "--cost-ckpt", str(ckpt), "--n-pairs", "100",
                     "--strict"]) == 1
    assert "spearman" in capsys.readouterr().out


def test_eval_requires_checkpoint(config):
    assert cli.main(["eval", "success", "--config", config]) == 2


def test_run_subcommand(config, tmp_path, capsys):
    assert cli.main(["run", "--config", config, "--out-dir", str(tmp_path)]) == 0
    runs = [p for p in tmp_path.iterdir() if p.name.startswith("run-")]
    assert len(runs) == 1 and (runs[0] / "actor.ckpt").exists()
