import csv
import json

import numpy as np
import pytest
import yaml

from tgforecast import cli
from tgforecast.cli import main, validate_node_counts
from tgforecast.config import RunConfig, load_run_config, run_config_from_dict
from tgforecast.dataio import align, load_embedding_table, load_stats_csv, load_stringency_csv
from tgforecast.errors import ConfigError, NumericError
from tgforecast.model import load_checkpoint

SMALL = {
    "synth": {"n_days": 120, "n_nodes": 3, "emb_dim": 2},
    "model": {"graph_hidden": 2, "seq_hidden": 3, "node_emb_dim": 2},
    "train": {"max_epochs": 2, "patience": 2},
    "horizons": [3],
}


def write_config(path, doc):
    path.write_text(yaml.safe_dump(doc))
    return path


def files_in(d, pattern):
    return sorted(p.name for p in d.glob(pattern))


# config ---------------------------------------------------------------------

def test_schema_rejects_unknown_keys():
    for doc in ({"lerning_rate": 1}, {"train": {"learning_rate": 1}}, {"model": {"hidden": 3}}):
        with pytest.raises(ConfigError, match="config invalid"):
            run_config_from_dict(doc)


def test_schema_rejects_bad_values():
    with pytest.raises(ConfigError):
        run_config_from_dict({"seeds": []})
    with pytest.raises(ConfigError):
        run_config_from_dict({"model": {"variant": "XY"}})
    with pytest.raises(ConfigError, match="duplicates"):
        run_config_from_dict({"node_counts": [5, 5]})


def test_paths_resolve_against_config_dir(tmp_path):
    sub = tmp_path / "cfg"
    sub.mkdir()
    run = load_run_config(write_config(sub / "run.yaml", {"data": {"stats": "d/stats.csv", "embeddings": "/abs/e"}}))
    assert run.data.stats == sub / "d" / "stats.csv"
    assert str(run.data.embeddings) == "/abs/e" and run.data.stringency is None


def test_json_config_and_defaults(tmp_path):
    p = tmp_path / "run.json"
    p.write_text(json.dumps({"seeds": [1, 2], "train": {"lr": 0.01}}))
    run = load_run_config(p)
    assert run.seeds == (1, 2) and run.train.lr == 0.01 and run.data is None
    assert load_run_config(write_config(tmp_path / "empty.yaml", {})) == RunConfig()


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "nope.yaml")


# synth ----------------------------------------------------------------------

def test_synth_default_files_realign(tmp_path):
    assert main(["synth", "--out", str(tmp_path)]) == 0
    assert files_in(tmp_path, "*") == ["embeddings.mgeb", "embeddings.mgeb.manifest", "stats.csv", "stringency.csv"]
    assert len((tmp_path / "stats.csv").read_text().splitlines()) == 451
    ds = align(load_stats_csv(tmp_path / "stats.csv"), load_stringency_csv(tmp_path / "stringency.csv"),
               load_embedding_table(tmp_path / "embeddings.mgeb"))
    assert len(ds) == 450 and ds.n_nodes == 50 and ds.emb_dim == 8


def test_synth_byte_identical_on_repeat(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["synth", "--config", str(cfg), "--out", str(a), "--seed", "4"]) == 0
    assert main(["synth", "--config", str(cfg), "--out", str(b), "--seed", "4"]) == 0
    for name in files_in(a, "*"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


# correlate ------------------------------------------------------------------

def read_table(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def small_data(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    cfg = write_config(d / "c.yaml", SMALL)
    assert main(["synth", "--config", str(cfg), "--out", str(d / "ds")]) == 0
    return d / "ds"


def test_correlate_single_lag_and_self(small_data, tmp_path):
    assert main(["correlate", "--data", str(small_data), "--max-lag", "0", "--out", str(tmp_path)]) == 0
    rows = read_table(tmp_path / "correlation.csv")
    assert {r["lag"] for r in rows} == {"0"}
    self_row = next(r for r in rows if r["signal"] == "new_cases" and r["target"] == "new_cases")
    assert float(self_row["r"]) == pytest.approx(1.0, abs=1e-12)
    assert {"embedding_mean_norm", "stringency_index", "internal_movement_roc"} <= {r["signal"] for r in rows}


def test_correlate_constant_series_marked_undefined(tmp_path):
    d = tmp_path / "d"
    d.mkdir()
    rows = [f"2021-01-{i + 1:02d},{i * 3 % 7},{i % 4}" for i in range(20)]
    (d / "stats.csv").write_text("date,new_cases,new_hospitalized\n" + "\n".join(rows) + "\n")
    strin = [f"2021-01-{i + 1:02d},50,1" for i in range(20)]
    (d / "stringency.csv").write_text("date,stringency_index,internal_movement\n" + "\n".join(strin) + "\n")
    assert main(["correlate", "--data", str(d), "--max-lag", "3", "--out", str(tmp_path / "o")]) == 0
    rows = read_table(tmp_path / "o" / "correlation.csv")
    assert all(r["r"] == "undefined" for r in rows if r["signal"] == "stringency_index")


# train / evaluate -----------------------------------------------------------

@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("train")
    cfg = write_config(d / "c.yaml", {**SMALL, "model": {**SMALL["model"], "variant": "SE"}})
    out = d / "ckpt"
    assert main(["train", "--config", str(cfg), "--seed", "0,1", "--horizon", "3,5", "--out", str(out)]) == 0
    return cfg, out


def test_train_two_by_two(trained):
    _, out = trained
    assert files_in(out, "*.mglm") == ["SE_h3_s0.mglm", "SE_h3_s1.mglm", "SE_h5_s0.mglm", "SE_h5_s1.mglm"]
    log = (out / "SE_h3_s0.log.jsonl").read_text().splitlines()
    assert len(log) == 2 and json.loads(log[0])["epoch"] == 1


def test_train_rerun_identical(trained, tmp_path):
    cfg, out = trained
    again = tmp_path / "again"
    assert main(["train", "--config", str(cfg), "--seed", "0,1", "--horizon", "3,5", "--out", str(again),
                 "--deterministic"]) == 0
    for name in files_in(out, "*.mglm"):
        assert (out / name).read_bytes() == (again / name).read_bytes()


def test_parallel_workers_match_serial(trained, tmp_path):
    cfg, out = trained
    doc = yaml.safe_load(cfg.read_text())
    par = write_config(tmp_path / "par.yaml", {**doc, "workers": 2})
    assert main(["train", "--config", str(par), "--seed", "0,1", "--horizon", "3,5", "--out", str(tmp_path / "p")]) == 0
    for name in files_in(out, "*.mglm"):
        assert (out / name).read_bytes() == (tmp_path / "p" / name).read_bytes()


def test_evaluate_report_with_baselines(trained, tmp_path):
    cfg, out = trained
    assert main(["evaluate", str(out), "--config", str(cfg), "--baselines", "--out", str(tmp_path)]) == 0
    rows = read_table(tmp_path / "report.csv")
    macro = [r for r in rows if r["target"] == "macro"]
    assert [(r["model"], r["horizon"]) for r in macro if r["model"] == "SE"] == [("SE", "3"), ("SE", "5")]
    assert all(r["n_runs"] == "2" for r in macro if r["model"] == "SE")
    assert {r["model"] for r in macro} >= {"AVG", "AVG_WINDOW", "LAST_DAY", "LIN_REG", "AR(7)"}
    assert (tmp_path / "report_predictions.csv").exists() and (tmp_path / "report.txt").exists()


def test_evaluate_dimension_mismatch_exit_2(trained, tmp_path):
    cfg, out = trained
    doc = yaml.safe_load(cfg.read_text())
    doc["synth"]["n_nodes"] = 4
    other = write_config(tmp_path / "other.yaml", doc)
    assert main(["evaluate", str(out / "SE_h3_s0.mglm"), "--config", str(other), "--out", str(tmp_path)]) == 2


def test_sr_without_embeddings_accepted(small_data, tmp_path):
    doc = {**SMALL, "model": {**SMALL["model"], "variant": "SR"},
           "data": {"stats": str(small_data / "stats.csv"), "stringency": str(small_data / "stringency.csv")}}
    cfg = write_config(tmp_path / "sr.yaml", doc)
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert files_in(tmp_path / "o", "*.mglm") == ["SR_h3_s0.mglm"]


def test_se_without_embeddings_is_config_error(small_data, tmp_path):
    doc = {**SMALL, "model": {**SMALL["model"], "variant": "SE"}, "data": {"stats": str(small_data / "stats.csv")}}
    cfg = write_config(tmp_path / "se.yaml", doc)
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_baseline_command(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", SMALL)
    assert main(["baseline", "--config", str(cfg), "--horizon", "1,7", "--out", str(tmp_path)]) == 0
    macro = [r for r in read_table(tmp_path / "baselines.csv") if r["target"] == "macro"]
    assert len(macro) == 2 * 5


# ablate ---------------------------------------------------------------------

def test_node_count_validation():
    assert validate_node_counts([25, 10, 50], 50) == [10, 25, 50]
    with pytest.raises(ConfigError, match="duplicate"):
        validate_node_counts([10, 10], 50)
    with pytest.raises(ConfigError, match="outside"):
        validate_node_counts([51], 50)


@pytest.mark.parametrize("nodes", ["2,2", "4"])
def test_ablate_rejections_exit_2(nodes, tmp_path):
    cfg = write_config(tmp_path / "c.yaml", SMALL)
    assert main(["ablate", "--config", str(cfg), "--nodes", nodes, "--out", str(tmp_path)]) == 2


def test_ablate_full_count_equals_plain_training(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", {**SMALL, "model": {**SMALL["model"], "variant": "SE"}})
    assert main(["ablate", "--config", str(cfg), "--nodes", "1,3", "--out", str(tmp_path / "ab")]) == 0
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "tr")]) == 0
    rows = [r for r in read_table(tmp_path / "ab" / "ablation.csv") if r["target"] == "macro"]
    assert [r["model"] for r in rows] == ["SE(N=1)", "SE(N=3)"]
    full, _, _ = load_checkpoint(tmp_path / "ab" / "checkpoints" / "SE_n3_h3_s0.mglm")
    plain, _, _ = load_checkpoint(tmp_path / "tr" / "SE_h3_s0.mglm")
    assert all(np.array_equal(full.params[k], plain.params[k]) for k in plain.params)


# exit codes -----------------------------------------------------------------

def test_exit_codes(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "missing.yaml")]) == 2
    d = tmp_path / "bad"
    d.mkdir()
    (d / "stats.csv").write_text("date,new_cases,new_hospitalized\n2021-01-01,1,1\n2021-01-01,2,2\n")
    assert main(["correlate", "--data", str(d), "--out", str(tmp_path / "o")]) == 3
    assert "duplicates date" in capsys.readouterr().err
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["synth", "--out", str(blocker / "sub")]) == 5
    with pytest.raises(SystemExit) as exc:
        main(["train", "--variant", "XX"])
    assert exc.value.code == 2


def test_numeric_error_exit_4(monkeypatch, tmp_path):
    def boom(args):
        raise NumericError("loss is nan at epoch 1, batch 1")
    monkeypatch.setattr(cli, "cmd_synth", boom)
    assert main(["synth", "--out", str(tmp_path)]) == 4
