"""Versioned JSON model files (``*.mann.json``).

Every real number is written as decimal text with 17 significant digits,
which round-trips IEEE doubles exactly. Keys are sorted and the layout is
fixed, so identical models serialize to identical bytes.
"""

import json
from pathlib import Path

import numpy as np

from mann import __version__
from mann.boost import BoostedModel
from mann.errors import InputShapeError, ModelFormatError
from mann.losses import LossKind
from mann.net import Activation, Network

FORMAT_VERSION = 1
SUFFIX = ".mann.json"


def _num(v):
    return format(float(v), ".17g")


def _array(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        return [_num(v) for v in a]
    return [[_num(v) for v in row] for row in a]


def network_to_dict(net: Network):
    return {
        "layer_sizes": list(net.layer_sizes),
        "hidden_activation": net.hidden_activation.value,
        "output_activation": net.output_activation.value,
        "weights": [_array(w) for w in net.weights],
        "biases": [_array(b) for b in net.biases],
    }


SCHEMA_KEYS = ("columns", "target")


def model_to_dict(model: BoostedModel):
    provenance = {"library_version": __version__}
    provenance.update({k: v for k, v in model.meta.items() if k not in SCHEMA_KEYS})
    schema = {k: model.meta[k] for k in SCHEMA_KEYS if k in model.meta}
    doc = {
        "format_version": FORMAT_VERSION,
        "loss": model.loss.value,
        "f0": _num(model.f0),
        "nu": _num(model.nu),
        "feature_dim": model.feature_dim,
        "learners": [network_to_dict(net) for net in model.learners],
        "provenance": provenance,
    }
    if schema:
        doc["schema"] = schema
    return doc


def dumps(model: BoostedModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, indent=1) + "\n"


def save(model: BoostedModel, path):
    path = Path(path)
    path.write_text(dumps(model), encoding="utf-8")
    return path


def _require(d, key, where):
    if not isinstance(d, dict) or key not in d:
        raise ModelFormatError(f"missing field {where}.{key}".lstrip("."),
                               field=f"{where}.{key}".lstrip("."))
    return d[key]


def _real(value, where):
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ModelFormatError(f"{where}: not a number: {value!r}", field=where) from None
    if not np.isfinite(out):
        raise ModelFormatError(f"{where}: non-finite value", field=where)
    return out


def _real_array(value, where):
    try:
        a = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ModelFormatError(f"{where}: malformed numeric array", field=where) from None
    if not np.all(np.isfinite(a)):
        raise ModelFormatError(f"{where}: non-finite value", field=where)
    return a


def network_from_dict(d, where="learner"):
    sizes = _require(d, "layer_sizes", where)
    weights = [_real_array(w, f"{where}.weights[{k}]")
               for k, w in enumerate(_require(d, "weights", where))]
    biases = [_real_array(b, f"{where}.biases[{k}]")
              for k, b in enumerate(_require(d, "biases", where))]
    try:
        return Network(
            list(sizes), weights, biases,
            Activation(_require(d, "hidden_activation", where)),
            Activation(_require(d, "output_activation", where)),
        )
    except (InputShapeError, ValueError, TypeError) as exc:
        raise ModelFormatError(f"{where}: {exc}", field=where) from None


def model_from_dict(d) -> BoostedModel:
    version = _require(d, "format_version", "")
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported format_version {version!r} (this build reads {FORMAT_VERSION})",
            field="format_version",
        )
    try:
        loss = LossKind.parse(_require(d, "loss", ""))
    except ValueError as exc:
        raise ModelFormatError(str(exc), field="loss") from None
    feature_dim = _require(d, "feature_dim", "")
    if not isinstance(feature_dim, int) or feature_dim < 1:
        raise ModelFormatError("feature_dim must be a positive integer",
                               field="feature_dim")
    learners = []
    for j, nd in enumerate(_require(d, "learners", "")):
        where = f"learners[{j}]"
        net = network_from_dict(nd, where)
        if net.input_dim != feature_dim:
            raise ModelFormatError(
                f"{where}: input size {net.input_dim} != feature_dim {feature_dim}",
                field=where,
            )
        learners.append(net)
    nu = _real(_require(d, "nu", ""), "nu")
    if not 0.0 < nu <= 1.0:
        raise ModelFormatError(f"nu must lie in (0, 1], got {nu}", field="nu")
    meta = dict(d.get("provenance", {}))
    meta.pop("library_version", None)
    meta.update(d.get("schema", {}))
    return BoostedModel(_real(_require(d, "f0", ""), "f0"), learners, nu, loss,
                        feature_dim, meta)


def loads(text: str) -> BoostedModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[:exc.pos].encode("utf-8"))
        raise ModelFormatError(
            f"model file is not valid JSON at byte offset {offset}: {exc.msg}",
            offset=offset,
        ) from None
    return model_from_dict(doc)


def load(path) -> BoostedModel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ModelFormatError(
            f"{path}: not UTF-8 text at byte offset {exc.start}", offset=exc.start
        ) from None
    return loads(text)
