import json
from pathlib import Path

import pytest

from bss_attack.config import load_config
from bss_attack.data import load_dataset
from bss_attack.model import load_checkpoint

ROOT = Path(__file__).resolve().parents[1]
RECORD = json.loads((ROOT / "checkpoints" / "accuracy.json").read_text())


@pytest.fixture(scope="module")
def heldout():
    cfg = load_config(ROOT / "configs" / "default.ini")
    assert RECORD["dataset"] == cfg.train.dataset
    return load_dataset(RECORD["dataset"]).split(RECORD["train_count"])[1]


@pytest.mark.parametrize("name", sorted(RECORD["models"]))
def test_shipped_model_accuracy(name, heldout):
    entry = RECORD["models"][name]
    model = load_checkpoint(ROOT / "checkpoints" / entry["checkpoint"])
    assert model.checksum() == entry["checksum"]
    acc = model.accuracy(heldout.images, heldout.labels)
    assert acc == pytest.approx(entry["heldout_accuracy"], abs=0.02)
    assert acc >= 0.90
