import json

import numpy as np
import pytest

from evaluation.scenarios import eval_bsm_scenario, eval_heston_scenario
from pirl.net import NetArchitecture, init_params, save_model
from pricing.cf_pricer import QuadratureConfig
from pricing.mc_pricer import McConfig
from utils.common import ModelFileError, ValidationError
from utils.config import default_config


@pytest.fixture
def bsm_section():
    section = default_config()["evaluation"]["bsm"]
    section.update(n_grid=5, n_random=20)
    return section


@pytest.fixture
def heston_section():
    section = default_config()["evaluation"]["heston"]
    section.update(spots={"atm": 70.0}, maturities=[0.5, 1.0])
    return section


def _model(tmp_path, model, meta=None):
    meta = {"strike": 70.0, "lambda12": 2.0, "lambda21": 1.0} if meta is None else meta
    net = init_params(NetArchitecture(model, 3, 4), seed=0, meta=meta)
    return save_model(net, tmp_path / f"{model}.rspirl")


def test_terminal_scenario(tmp_path, bsm_section):
    result = eval_bsm_scenario(_model(tmp_path, "bsm-rs"), "terminal", bsm_section, QuadratureConfig(), 0)
    assert len(result.points) == 10
    np.testing.assert_allclose(result.points["oracle"], np.maximum(70.0 - result.points["S"], 0.0))
    assert sorted(result.summary["regime"]) == [1, 2]
    paths = result.write(tmp_path / "out")
    assert [p.name for p in paths] == ["terminal_points.csv", "terminal_summary.csv", "terminal_summary.json"]
    doc = json.loads(paths[-1].read_text(encoding="utf-8"))
    assert doc["scenario"] == "terminal"
    assert len(doc["summary"]) == 2


def test_grid_scenario_without_switching_adds_closed_form(tmp_path, bsm_section):
    path = _model(tmp_path, "bsm-rs", {"strike": 70.0, "lambda12": 0.0, "lambda21": 0.0})
    result = eval_bsm_scenario(path, "tau1-grid", bsm_section, QuadratureConfig(), 0)
    np.testing.assert_allclose(result.points["oracle"], result.points["closed_form"], atol=1e-6)


def test_random_scenario_reports_timing(tmp_path, bsm_section):
    result = eval_bsm_scenario(_model(tmp_path, "bsm-rs"), "random-25000", bsm_section, QuadratureConfig(), 3)
    assert len(result.points) == 40
    assert set(result.extra["timing"]) >= {"pirl_seconds_per_point", "cf_seconds_per_point", "speedup"}
    assert result.summary["n"].sum() <= 40


def test_heston_scenario_coverage_columns(tmp_path, heston_section):
    path = _model(tmp_path, "heston-rs", {"strike": 70.0, "lambda12": 2.0, "lambda21": 3.0})
    mc_cfg = McConfig(n_paths=2000, n_steps=20, seed=1, batch_size=1000)
    result = eval_heston_scenario(path, "heston-itm-atm-otm", heston_section, mc_cfg)
    assert len(result.points) == 4
    assert {"ci_low", "ci_high", "in_ci", "std_error"} <= set(result.points.columns)
    assert "ci_rate" in result.summary.columns
    assert 0.0 <= result.extra["ci_rate"] <= 1.0


def test_model_type_must_match(tmp_path, bsm_section, heston_section):
    with pytest.raises(ValidationError):
        eval_bsm_scenario(_model(tmp_path, "heston-rs"), "terminal", bsm_section, QuadratureConfig(), 0)
    with pytest.raises(ValidationError):
        eval_heston_scenario(_model(tmp_path, "bsm-rs"), "heston-no-rs", heston_section, McConfig(n_paths=10))


def test_missing_training_constants(tmp_path, bsm_section):
    with pytest.raises(ModelFileError):
        eval_bsm_scenario(_model(tmp_path, "bsm-rs", {}), "terminal", bsm_section, QuadratureConfig(), 0)


def test_unknown_scenario(tmp_path, bsm_section):
    with pytest.raises(ValidationError):
        eval_bsm_scenario(_model(tmp_path, "bsm-rs"), "heston-no-rs", bsm_section, QuadratureConfig(), 0)
