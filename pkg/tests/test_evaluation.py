import csv
import datetime as dt

import numpy as np
import pytest

from tgforecast.baselines import BASELINE_TAGS, BaselineKind
from tgforecast.evaluation import (MACRO, SUMMARY_COLUMNS, build_report, evaluate_baseline, evaluate_model,
                                   format_summary_table, summarize, write_reports)
from tgforecast.model import ModelConfig, init_model
from tgforecast.synth import SynthConfig, synth_generate
from tgforecast.training import TrainConfig, prepare_data

TARGETS = ("new_cases", "new_hospitalized")


def dates(n):
    return [dt.date(2021, 1, 1) + dt.timedelta(days=i) for i in range(n)]


def test_perfect_prediction_row(rng):
    y = rng.uniform(1, 100, size=(12, 2))
    rep = build_report("stub", 7, 0, TARGETS, dates(12), y, y.copy())
    for key in TARGETS + (MACRO,):
        s = rep.scores[key]
        assert (s["MAE"], s["RMSE"], s["MAPE"], s["R2"]) == (0.0, 0.0, 0.0, 1.0)
    assert rep.n == 12


def test_macro_is_mean_of_targets(rng):
    y, p = rng.uniform(1, 100, size=(20, 2)), rng.uniform(1, 100, size=(20, 2))
    rep = build_report("m", 1, 0, TARGETS, dates(20), y, p)
    for m in ("MAE", "RMSE", "MAPE", "R2"):
        assert rep.scores[MACRO][m] == pytest.approx((rep.scores[TARGETS[0]][m] + rep.scores[TARGETS[1]][m]) / 2)


def test_std_from_five_seeds(rng):
    y = rng.uniform(10, 100, size=(8, 2))
    reps = [build_report("SE", 7, s, TARGETS, dates(8), y, y + s + 1) for s in range(5)]
    rows = summarize(reps)
    macro = next(r for r in rows if r.target == MACRO)
    maes = [r.scores[MACRO]["MAE"] for r in reps]
    assert macro.n_runs == 5
    assert macro.mean["MAE"] == pytest.approx(np.mean(maes))
    assert macro.std["MAE"] == pytest.approx(np.std(maes, ddof=1)) and macro.std["MAE"] > 0


@pytest.fixture(scope="module")
def small_ds():
    return synth_generate(SynthConfig(n_days=160, n_nodes=4, emb_dim=2, seed=1))


def test_one_row_per_baseline_kind(small_ds):
    tcfg = TrainConfig()
    reps = [evaluate_baseline(BaselineKind(tag, 3), small_ds, 7, tcfg) for tag in BASELINE_TAGS]
    rows = [r for r in summarize(reps) if r.target == MACRO]
    assert [r.model for r in rows] == ["AVG", "AVG_WINDOW", "LAST_DAY", "LIN_REG", "AR(3)"]


def test_baseline_evaluates_test_days_only(small_ds):
    rep = evaluate_baseline(BaselineKind("LAST_DAY"), small_ds, 5, TrainConfig())
    assert rep.n == 32 and rep.dates[0] == small_ds.dates[128]
    assert np.array_equal(rep.predicted, small_ds.stats[123:155])


def test_model_report_uses_denormalized_targets(small_ds):
    cfg = ModelConfig(variant="SRE", n_stat=2, n_reg=4, n_nodes=4, emb_dim=2, graph_hidden=2, seq_hidden=3,
                      node_emb_dim=2, horizon=3)
    model = init_model(cfg, 0)
    tcfg = TrainConfig()
    data = prepare_data(small_ds, cfg, tcfg)
    rep = evaluate_model(model, small_ds, data.normalizers, tcfg, seed=0)
    assert np.array_equal(rep.actual, small_ds.stats[data.windows["test"].target_index])
    assert rep.n == len(data.windows["test"].target_index) and rep.model == "SRE"


def test_written_reports(tmp_path, rng):
    y = rng.uniform(10, 100, size=(5, 2))
    reps = [build_report("SE", 7, s, TARGETS, dates(5), y, y * 1.1) for s in range(2)]
    csv_path, txt_path, pred_path = write_reports(tmp_path, reps, "r")
    with open(csv_path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == SUMMARY_COLUMNS and len(rows) == 4
    assert "MAE" in txt_path.read_text() and "±" in format_summary_table(summarize(reps))
    assert len(pred_path.read_text().splitlines()) == 1 + 2 * 5 * 2
