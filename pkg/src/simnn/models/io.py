"""Versioned JSON serialisation of trained SNN and RBF models.

Floats are written with ``repr`` precision, so a reloaded model reproduces
the in-process predictions bit for bit. SNN prototypes are stored both by
training-row reference and as raw token lines in the schema's column layout.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from ..dataset import Dataset, Encoder, parse_lines, format_example, schema_from_dict
from ..similarity import SimilarityModel
from .rbf import RBFModel
from .snn import SNNModel

FORMAT = "simnn-model"
VERSION = 1

Model = Union[SNNModel, RBFModel]


class ModelFormatError(ValueError):
    """The file is not a model this version can read."""


def write_atomic(path: str | Path, text: str) -> None:
    """Write ``text`` to a temporary sibling file, then rename it into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _array(x) -> np.ndarray:
    a = np.array(x, dtype=float)
    a.setflags(write=False)
    return a


def model_to_dict(model: Model, metadata: Mapping | None = None) -> dict:
    if isinstance(model, SNNModel):
        schema = model.similarity.schema
        body = {
            "method": "SNN",
            "similarity": model.similarity.to_dict(),
            "prototype_rows": list(model.prototype_rows),
            "prototypes": [format_example(schema, ex) for ex in model.prototypes.examples()],
            "smoothing": model.smoothing.tolist(),
            "s_min": model.s_min,
            "penalize_bias": model.penalize_bias,
        }
    elif isinstance(model, RBFModel):
        schema = model.encoder.schema
        body = {
            "method": model.variant,
            "encoder": model.encoder.to_dict(),
            "centers": model.centers.tolist(),
            "center_rows": list(model.center_rows),
            "sigma": model.sigma,
            "hyper": model.hyper,
        }
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    doc = {"format": FORMAT, "version": VERSION, "schema": schema.to_dict()}
    doc.update(body)
    doc.update({"W": model.W.tolist(), "lambda": model.lam, "gcv": model.gcv, "classes": list(model.classes)})
    doc["metadata"] = dict(metadata or {})
    return doc


def model_from_dict(doc: Mapping) -> Model:
    if doc.get("format") != FORMAT:
        raise ModelFormatError("not a simnn model file")
    if doc.get("version") != VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
    schema = schema_from_dict(doc["schema"])
    W = _array(doc["W"])
    common = dict(W=W, lam=float(doc["lambda"]), gcv=float(doc["gcv"]), classes=tuple(doc["classes"]))
    method = doc.get("method")
    if method == "SNN":
        sim = SimilarityModel.from_dict(schema, doc["similarity"])
        protos = Dataset.from_examples(schema, parse_lines(doc["prototypes"], schema, source="<prototypes>"))
        return SNNModel(
            similarity=sim,
            prototypes=protos,
            prototype_rows=tuple(int(r) for r in doc["prototype_rows"]),
            smoothing=_array(doc["smoothing"]),
            s_min=float(doc["s_min"]),
            penalize_bias=bool(doc["penalize_bias"]),
            **common,
        )
    if method in ("RBFk", "RBF2"):
        return RBFModel(
            variant=method,
            encoder=Encoder.from_dict(schema, doc["encoder"]),
            centers=_array(doc["centers"]).reshape(len(doc["centers"]), -1),
            sigma=float(doc["sigma"]),
            hyper=float(doc["hyper"]),
            center_rows=tuple(int(r) for r in doc["center_rows"]),
            **common,
        )
    raise ModelFormatError(f"unknown method {method!r}")


def dumps_model(model: Model, metadata: Mapping | None = None) -> str:
    return json.dumps(model_to_dict(model, metadata), indent=1, allow_nan=False) + "\n"


def save_model(path: str | Path, model: Model, metadata: Mapping | None = None) -> None:
    write_atomic(path, dumps_model(model, metadata))


def load_model(path: str | Path) -> Model:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: malformed model file: {exc}") from None
    return model_from_dict(doc)
