"""Model files: JSON with decimal-string probabilities, checked by a schema."""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ModelError
from .model import AlohaParams, RegionSplit, TransitionKernel, aloha_kernel, validate


def schema():
    text = resources.files("quarterwalk").joinpath("schema/model.schema.json").read_text()
    return json.loads(text)


def kernel_hash(kernel: TransitionKernel) -> str:
    """SHA-256 over the thresholds and the little-endian float64 table."""
    h = hashlib.sha256()
    h.update(f"{kernel.N1},{kernel.N2};".encode())
    h.update(np.ascontiguousarray(kernel.table, dtype="<f8").tobytes())
    return h.hexdigest()


def _dec(v) -> str:
    return repr(float(v))


def _num(s):
    return float(s)


def _nested(arr, fn):
    return np.vectorize(fn, otypes=[object])(np.asarray(arr)).tolist()


def to_document(model) -> dict:
    """Serialisable document for a TransitionKernel or AlohaParams."""
    if isinstance(model, AlohaParams):
        return {"N1": model.split.N1, "N2": model.split.N2, "kind": "aloha",
                "lambda1": _nested(model.lam1, _dec), "lambda2": _nested(model.lam2, _dec),
                "a1": _nested(model.a1, _dec), "a2": _nested(model.a2, _dec)}
    if isinstance(model, TransitionKernel):
        return {"N1": model.N1, "N2": model.N2, "kind": "raw",
                "s0": _nested(model.s0, _dec), "s1": _nested(model.s1, _dec),
                "s2": _nested(model.s2, _dec), "s3": _nested(model.s3, _dec)}
    raise TypeError(f"cannot serialise {type(model).__name__}")


def _pointer(err) -> str:
    return "/" + "/".join(str(p) for p in err.absolute_path)


def from_document(doc: dict):
    """Parse a model document into AlohaParams or TransitionKernel."""
    try:
        jsonschema.validate(doc, schema())
    except jsonschema.ValidationError as err:
        raise ModelError(f"schema violation at {_pointer(err)}: {err.message}") from None
    split = RegionSplit(doc["N1"], doc["N2"])
    conv = np.vectorize(_num, otypes=[float])
    try:
        if doc["kind"] == "aloha":
            return AlohaParams(split, *(conv(np.array(doc[k], dtype=object)) for k in ("lambda1", "lambda2", "a1", "a2")))
        return TransitionKernel.from_regions(split, *(conv(np.array(doc[k], dtype=object)) for k in ("s0", "s1", "s2", "s3")))
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"malformed region tables: {exc}") from None


def as_kernel(model) -> TransitionKernel:
    return aloha_kernel(model) if isinstance(model, AlohaParams) else model


def load_model(path, check: bool = True):
    """Read, schema-check and validate a model file.

    Returns (model, kernel). With ``check`` the oracle-mode validation
    report must be clean, otherwise ModelError lists the violations.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ModelError(f"model file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ModelError(f"model file is not JSON: {exc}") from None
    model = from_document(doc)
    kernel = as_kernel(model)
    if check:
        rep = validate(kernel, "oracle")
        if not rep.ok:
            raise ModelError("; ".join(rep.violations))
    return model, kernel


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(to_document(model), indent=1, sort_keys=True) + "\n")
