import json

import numpy as np
import pytest
from dataclasses import replace

from bss_attack import harness
from bss_attack.config import ExperimentConfig, ModelSpec, TrainConfig, load_config, parse_number
from bss_attack.data import synthetic_dataset
from bss_attack.errors import ConfigError
from bss_attack.imageio import read_image
from bss_attack.model import ArchConfig, TinyConvNet, load_checkpoint

ARCH = ArchConfig(height=16, width=16, c1=4, c2=4)


@pytest.fixture(scope="module")
def small_setup():
    data = synthetic_dataset(5, 24, resolution=16)
    models = {"s": TinyConvNet(ARCH, seed=1), "t1": TinyConvNet(ARCH, seed=2), "t2": TinyConvNet(ARCH, seed=3)}
    return data, models


def make_ws(small_setup, **kw):
    data, models = small_setup
    cfg = replace(ExperimentConfig(samples=6, require_correct=False, methods=("none", "bss", "dim"),
                                   number_scales=(1, 3)), **kw)
    return harness.prepare(cfg, dataset=data, models=models, surrogate="s")


@pytest.mark.parametrize("args, expected", [
    ((35, 40, 224, 32), (5, 6)),
    ((35, 40, 224, 224), (35, 40)),
    ((35, 40, 224, 64), (10, 11)),
    ((1, 1, 224, 16), (1, 1)),
])
def test_scale_parameters(args, expected):
    assert harness.scale_parameters(*args) == expected


def test_scale_parameters_errors():
    with pytest.raises(ConfigError):
        harness.scale_parameters(35, 40, 224, 7)
    with pytest.raises(ConfigError):
        harness.scale_parameters(35, 200, 224, 32)  # spacing 29 cannot fit two points


def test_sweep_plan_reports_none_once():
    plan, warnings = harness.sweep_plan(("none", "bss"), (1, 5, 10))
    assert plan == [("none", 1), ("bss", 1), ("bss", 5), ("bss", 10)]
    assert len(warnings) == 1
    plan, warnings = harness.sweep_plan(("bss",), (5,))
    assert plan == [("bss", 5)] and warnings == []


def test_eval_counts_and_budget(small_setup):
    ws = make_ws(small_setup)
    table = harness.run_sweep(ws)
    assert [(c.method, c.n) for c in table.cells] == [("none", 1), ("bss", 1), ("dim", 1), ("bss", 3), ("dim", 3)]
    for c in table.cells:
        assert c.evals == c.expected_evals == 6 * ws.cfg.attack.T * c.n
        assert len(c.max_linf) == ws.cfg.attack.T
        assert max(c.max_linf) <= np.float32(16 / 255)
        assert c.violations == 0
    assert table.budget_violations() == 0


def test_thread_count_does_not_change_results(small_setup):
    a = harness.run_sweep(make_ws(small_setup, threads=1)).to_csv()
    b = harness.run_sweep(make_ws(small_setup, threads=4)).to_csv()
    assert a == b


def test_csv_layout(small_setup, tmp_path):
    ws = make_ws(small_setup)
    table = harness.run_ablation(ws, n=2)
    csv_path, json_path = harness.write_results(table, ws, tmp_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "method,N,model,success_rate_pct,evals,wall_ms"
    assert len(lines) == 1 + 5 * 3
    assert lines[1].startswith("none,1,s*,") and lines[1].endswith(",")
    record = json.loads(json_path.read_text())
    assert [c["method"] for c in record["cells"]] == list(harness.ABLATION_METHODS)
    assert record["budget"]["violations"] == 0
    assert record["scaled_bss"] == {"d_b": 3, "d_p": 3, "M": 2, "r": 1.0}
    timed = table.to_csv(timing=True).splitlines()[1]
    assert not timed.endswith(",")


def test_require_correct_selects_and_warns(small_setup):
    data, models = small_setup
    cfg = ExperimentConfig(samples=20, require_correct=True)
    ws = harness.prepare(cfg, dataset=data, models=models, surrogate="s")
    pred = models["s"].predict(data.images)
    assert np.all(pred[ws.indices] == data.labels[ws.indices])
    if len(ws.indices) < 20:
        assert ws.warnings


def test_prepare_rejects_mismatch(small_setup):
    _, models = small_setup
    with pytest.raises(ConfigError):
        harness.prepare(ExperimentConfig(), dataset=synthetic_dataset(1, 4, resolution=32), models=models,
                        surrogate="s")


def test_missing_checkpoint(tmp_path):
    cfg = ExperimentConfig(surrogate=tmp_path / "nope.bin")
    with pytest.raises(ConfigError, match="train"):
        harness.prepare(cfg)


def test_saliency_dump(small_setup, tmp_path):
    data, models = small_setup
    sal = harness.saliency_dump(models["s"], data.images[0], int(data.labels[0]), tmp_path / "s.png")
    assert sal.shape == (16, 16) and sal.max() == pytest.approx(1.0) and sal.min() >= 0
    assert read_image(tmp_path / "s.png").shape == (1, 16, 16)


def test_transform_preview(small_setup, tmp_path):
    data, _ = small_setup
    cfg = ExperimentConfig()
    bss = harness.bss_config_for(cfg, 16)
    paths = harness.transform_preview(data.images[0], bss, 3, 0, tmp_path)
    assert len(paths) == 4
    assert all(read_image(p).shape == (3, 16, 16) for p in paths)


def test_parse_number():
    assert parse_number("16/255") == pytest.approx(16 / 255)
    assert parse_number(" 0.5 ") == 0.5
    with pytest.raises(ConfigError):
        parse_number("abc")
    with pytest.raises(ConfigError):
        parse_number("1/0")


def test_load_config(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text("""
[experiment]
seed = 7
out = res
[attack]
epsilon = 8/255   ; smaller ball
iterations = 5
[bss]
d_b = 10
target_length_mode = literal
[sweep]
methods = none, bss-1d
number_scales = 1, 5
[train]
models = a:1:4:8, b:2:8:8
""")
    cfg = load_config(path)
    assert cfg.seed == 7 and cfg.out == tmp_path / "res"
    assert cfg.attack.epsilon == pytest.approx(8 / 255) and cfg.attack.T == 5
    assert cfg.attack.step_size == pytest.approx(8 / 255 / 5)
    assert cfg.bss.d_b == 10 and cfg.bss.d_p == 40 and cfg.bss.target_length_mode.value == "literal"
    assert cfg.methods == ("none", "bss-1d") and cfg.number_scales == (1, 5)
    assert cfg.train.models == (ModelSpec("a", 1, 4, 8), ModelSpec("b", 2, 8, 8))
    assert cfg.surrogate == tmp_path / "checkpoints/surrogate.bin"


@pytest.mark.parametrize("body", [
    "[bogus]\nx = 1\n",
    "[attack]\nepsilon = 2\n",
    "[experiment]\nthreads = 0\n",
    "[train]\nmodels = a:1:4\n",
    "[data]\nrequire_correct = maybe\n",
])
def test_bad_config(tmp_path, body):
    path = tmp_path / "bad.ini"
    path.write_text(body)
    with pytest.raises(ConfigError):
        load_config(path)


def test_shipped_configs_load():
    from pathlib import Path
    for path in sorted((Path(__file__).parents[1] / "configs").glob("*.ini")):
        cfg = load_config(path)
        assert cfg.attack.epsilon == pytest.approx(16 / 255)


def test_train_models(tmp_path):
    cfg = ExperimentConfig(train=TrainConfig(dataset="synthetic:3:60:16", train_count=50, epochs=1, lr=0.01,
                                             models=(ModelSpec("m", 4, 4, 4),)))
    record = harness.train_models(cfg, tmp_path)
    model = load_checkpoint(tmp_path / "m.bin")
    assert record["models"]["m"]["checksum"] == model.checksum()
    assert json.loads((tmp_path / "accuracy.json").read_text())["heldout_count"] == 10
