import json

import numpy as np
import pytest

from mann import persist
from mann.boost import BoostedModel, TrainConfig, train
from mann.data import gen_analytical
from mann.errors import ModelFormatError
from mann.losses import LossKind


@pytest.fixture(scope="module")
def model():
    m, _ = train(gen_analytical(12, 0.05, seed=0),
                 TrainConfig(max_iterations=3, epoch_cap=5, batch_size=32, seed=2))
    return m


def test_round_trip_predictions_identical(model, tmp_path):
    path = persist.save(model, tmp_path / "m.mann.json")
    back = persist.load(path)
    x = np.random.default_rng(0).uniform(-3, 3, size=(100, 2))
    assert np.max(np.abs(back.predict_raw(x) - model.predict_raw(x))) <= 1e-15
    assert back.loss is model.loss and back.nu == model.nu and back.f0 == model.f0
    for a, b in zip(model.learners, back.learners):
        assert all(np.array_equal(p, q) for p, q in zip(a.parameters(), b.parameters()))


def test_save_twice_same_bytes(model, tmp_path):
    a = persist.save(model, tmp_path / "a.mann.json").read_bytes()
    b = persist.save(model, tmp_path / "b.mann.json").read_bytes()
    assert a == b
    # and a reloaded model writes the same bytes again
    c = persist.save(persist.load(tmp_path / "a.mann.json"), tmp_path / "c.mann.json")
    assert c.read_bytes() == a


def test_numbers_stored_as_17_digit_text(model):
    doc = json.loads(persist.dumps(model))
    assert isinstance(doc["f0"], str) and float(doc["f0"]) == model.f0
    w = doc["learners"][0]["weights"][0][0][0]
    assert isinstance(w, str)
    assert doc["provenance"]["seed"] == 2
    assert doc["provenance"]["config_sha256"] == model.meta["config_sha256"]
    assert "library_version" in doc["provenance"]


def test_unknown_format_version(model):
    doc = persist.model_to_dict(model)
    doc["format_version"] = 99
    with pytest.raises(ModelFormatError) as exc:
        persist.model_from_dict(doc)
    assert exc.value.field == "format_version"
    del doc["format_version"]
    with pytest.raises(ModelFormatError):
        persist.model_from_dict(doc)


def test_truncated_file_names_offset(model, tmp_path):
    text = persist.dumps(model)
    path = tmp_path / "cut.mann.json"
    path.write_text(text[:200])
    with pytest.raises(ModelFormatError) as exc:
        persist.load(path)
    assert exc.value.offset is not None and 0 < exc.value.offset <= 200
    assert "offset" in str(exc.value)


def test_layer_size_mismatch_names_learner(model):
    doc = persist.model_to_dict(model)
    doc["learners"][1]["layer_sizes"][1] += 1
    with pytest.raises(ModelFormatError) as exc:
        persist.model_from_dict(doc)
    assert "learners[1]" in str(exc.value)


def test_input_dim_mismatch(model):
    doc = persist.model_to_dict(model)
    doc["feature_dim"] = 3
    with pytest.raises(ModelFormatError) as exc:
        persist.model_from_dict(doc)
    assert "learners[0]" in str(exc.value)


@pytest.mark.parametrize("field,value", [
    ("nu", "0"), ("nu", "abc"), ("f0", "nan"), ("loss", "hinge"), ("feature_dim", 0),
])
def test_invalid_fields(model, field, value):
    doc = persist.model_to_dict(model)
    doc[field] = value
    with pytest.raises(ModelFormatError):
        persist.model_from_dict(doc)


def test_non_finite_weight_rejected(model):
    doc = persist.model_to_dict(model)
    doc["learners"][0]["biases"][0][0] = "inf"
    with pytest.raises(ModelFormatError) as exc:
        persist.model_from_dict(doc)
    assert "learners[0].biases[0]" in str(exc.value)


def test_minimal_model_predicts_f0(tmp_path):
    m = BoostedModel(-0.5, [], 0.3, LossKind.LOGLOSS, 4)
    back = persist.load(persist.save(m, tmp_path / "min.mann.json"))
    np.testing.assert_array_equal(back.predict_raw(np.zeros((3, 4))), [-0.5] * 3)
    assert back.loss is LossKind.LOGLOSS and back.n_learners == 0


def test_schema_round_trip(tmp_path):
    m = BoostedModel(0.0, [], 0.1, LossKind.SQUARED, 1,
                     {"seed": 1, "columns": [{"name": "a", "kind": "numeric"}],
                      "target": {"name": "y", "kind": "numeric"}})
    back = persist.load(persist.save(m, tmp_path / "s.mann.json"))
    assert back.meta == m.meta
