"""JSON model files.

Floats are written with ``repr`` precision by the json module, so loading
a saved model reproduces every parameter bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .gp import ExprModel, parse_prefix
from .linear import LinearModel

FORMAT_VERSION = 1


def model_to_json(model) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "response": model.response,
        "feature_names": list(model.feature_names),
    }
    if isinstance(model, LinearModel):
        doc["parameters"] = {
            "intercept": model.intercept,
            "coefficients": list(model.coefficients),
            "log_response": model.log_response,
            "xtx_inv": None if model.xtx_inv is None else model.xtx_inv.tolist(),
        }
        doc["training"] = {
            "n": model.n,
            "residual_std": model.residual_std,
            "r_squared": model.r_squared,
            "seed": model.seed,
            "train_rows": list(model.train_rows),
        }
    elif isinstance(model, ExprModel):
        doc["expression"] = model.expression
        doc["training"] = {
            "n": len(model.train_rows),
            "mse": model.mse,
            "node_count": model.node_count,
            "seed": model.seed,
            "generations": model.generations,
            "history": list(model.history),
            "train_rows": list(model.train_rows),
        }
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return doc


def model_from_json(doc: dict):
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('format_version')!r}")
    names = tuple(doc["feature_names"])
    tr = doc["training"]
    if doc["kind"] == "linear":
        p = doc["parameters"]
        return LinearModel(
            intercept=p["intercept"],
            coefficients=tuple(p["coefficients"]),
            feature_names=names,
            n=tr["n"],
            residual_std=tr["residual_std"],
            r_squared=tr["r_squared"],
            xtx_inv=None if p.get("xtx_inv") is None else np.array(p["xtx_inv"], dtype=float),
            log_response=p.get("log_response", False),
            response=doc.get("response", "y"),
            seed=tr.get("seed"),
            train_rows=tuple(tr.get("train_rows", ())),
        )
    if doc["kind"] == "expression":
        return ExprModel(
            program=parse_prefix(doc["expression"], names),
            feature_names=names,
            mse=tr["mse"],
            seed=tr.get("seed"),
            generations=tr.get("generations", 0),
            history=list(tr.get("history", ())),
            response=doc.get("response", "y"),
            train_rows=tuple(tr.get("train_rows", ())),
        )
    raise ValueError(f"unknown model kind {doc['kind']!r}")


def dumps_model(model) -> str:
    return json.dumps(model_to_json(model), indent=2, sort_keys=True) + "\n"


def save_model(model, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def load_model(path):
    return model_from_json(json.loads(Path(path).read_text(encoding="utf-8")))
