"""Structured-text (JSON) persistence for models.

Arrays are stored as ``{"shape": [...], "data": [...]}`` with ``data`` flat
in row-major order. Floats are written with Python's shortest round-trip
repr, so a save/load cycle is bit-exact.
"""

import json

import numpy as np

from .dmm import DirichletMixture
from .gmm import DiagonalGmm
from .mfa import MfaModel

FORMAT_VERSION = 1


def pack(a):
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel(order="C")]}


def unpack(obj):
    return np.asarray(obj["data"], dtype=np.float64).reshape(obj["shape"])


def model_to_dict(m):
    if isinstance(m, DiagonalGmm):
        doc = {"kind": "gmm", "K": m.K, "D": m.D, "R": 0}
        doc["params"] = {"weights": pack(m.weights), "means": pack(m.means),
                         "variances": pack(m.variances)}
    elif isinstance(m, DirichletMixture):
        doc = {"kind": "dmm", "K": m.K, "D": m.S, "R": 0, "epsilon": m.epsilon}
        doc["params"] = {"weights": pack(m.weights), "alphas": pack(m.alphas)}
    elif isinstance(m, MfaModel):
        doc = {"kind": "mfa", "K": m.K, "D": m.D, "R": m.R, "shared_noise": m.shared_noise}
        doc["params"] = {"weights": pack(m.weights), "means": pack(m.means),
                         "loadings": pack(m.loadings), "noise": pack(m.noise)}
    else:
        raise TypeError(f"cannot serialize {type(m).__name__}")
    doc["version"] = FORMAT_VERSION
    doc["history"] = [float(v) for v in m.history]
    return doc


def model_from_dict(doc):
    kind = doc.get("kind")
    p = {k: unpack(v) for k, v in doc["params"].items()}
    hist = tuple(doc.get("history", ()))
    if kind == "gmm":
        return DiagonalGmm(p["weights"], p["means"], p["variances"], hist)
    if kind == "dmm":
        return DirichletMixture(p["weights"], p["alphas"], float(doc["epsilon"]), hist)
    if kind == "mfa":
        return MfaModel(p["weights"], p["means"], p["loadings"], p["noise"], hist)
    raise ValueError(f"unknown model kind {kind!r}")


def dump_json(doc, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def save_model(m, path):
    dump_json(model_to_dict(m), path)


def load_model(path):
    return model_from_dict(load_json(path))
