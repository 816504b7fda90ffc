import json

import numpy as np
import pytest

from conftest import tiny_config
from core.errors import SchemaError
from core.model import predict_next, train_pgru
from integrations.checkpoint import (CHECKPOINT_FORMAT, dataset_digest, load_checkpoint,
                                     read_manifest, save_checkpoint, write_manifest)
from integrations.synthetic_source import generate


@pytest.fixture(scope="module")
def model_and_data():
    dataset = generate(seed=3, n_days=50)
    model, _ = train_pgru(dataset, tiny_config(cell="lstm", head_layers=2))
    return model, dataset


def test_checkpoint_restores_predictions_exactly(tmp_path, model_and_data):
    model, dataset = model_and_data
    path = save_checkpoint(model, tmp_path / "checkpoint.json")
    restored = load_checkpoint(path)
    assert restored.config == model.config
    for name, tensor in model.price_net.tensors().items():
        np.testing.assert_array_equal(restored.price_net.tensors()[name], tensor)
    np.testing.assert_array_equal(restored.fusion.flatten(), model.fusion.flatten())
    window = slice(len(dataset) - model.w, len(dataset))
    assert predict_next(restored, dataset.price[window], dataset.structural[window]) == \
        predict_next(model, dataset.price[window], dataset.structural[window])


def test_checkpoint_bytes_are_stable(tmp_path, model_and_data):
    model, _ = model_and_data
    first = save_checkpoint(model, tmp_path / "a.json")
    second = save_checkpoint(load_checkpoint(first), tmp_path / "b.json")
    assert first.read_bytes() == second.read_bytes()
    assert json.loads(first.read_text())["format"] == CHECKPOINT_FORMAT


def test_bad_checkpoints_are_schema_errors(tmp_path, model_and_data):
    model, _ = model_and_data
    data = json.loads(save_checkpoint(model, tmp_path / "c.json").read_text())
    data["format"] = "other/2"
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps(data))
    with pytest.raises(SchemaError):
        load_checkpoint(wrong)
    data["format"] = CHECKPOINT_FORMAT
    del data["fusion"]
    missing = tmp_path / "missing.json"
    missing.write_text(json.dumps(data))
    with pytest.raises(SchemaError, match="fusion"):
        load_checkpoint(missing)
    garbage = tmp_path / "garbage.json"
    garbage.write_text("{not json")
    with pytest.raises(SchemaError):
        load_checkpoint(garbage)


def test_manifest_records_config_and_digest(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_text("x\n1\n")
    b.write_text("y\n2\n")
    cfg = tiny_config(seed=9)
    path = write_manifest(tmp_path / "manifest.json", cfg, [a, b], metrics={"mse": 1.5})
    manifest = read_manifest(path)
    assert manifest["cell"] == "gru"
    assert manifest["seeds"] == {"seed": 9, "rng": "philox4x64"}
    assert manifest["dataset"]["files"] == ["a.csv", "b.csv"]
    assert manifest["dataset"]["sha256"] == dataset_digest(a, b)
    assert manifest["config"]["window"] == cfg.window
    b.write_text("y\n3\n")
    assert dataset_digest(a, b) != manifest["dataset"]["sha256"]
