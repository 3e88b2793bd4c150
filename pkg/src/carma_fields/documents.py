"""JSON model documents.

A document describes one model and its noise::

    {"d": 2, "mode": "CARMA", "p": 2, "q": 1,
     "a": [[1, 3, 2], [1, 3, 2]], "b": [1, 1],
     "levy": {"type": "gaussian", "sigma2": 1.0}}

GCARMA documents give ``"A"`` (a list of ``p x p`` matrices) and ``"c"``
instead of ``"a"`` and ``"q"``.  Noise types are ``gaussian``,
``compound_poisson`` (with ``rate`` and a ``jump`` law: ``constant``,
``gaussian`` or ``laplace``) and ``stable`` (``alpha``, ``eta``).  Every
noise type also accepts ``beta``; ``gaussian`` and ``compound_poisson``
accept ``sigma2``.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import CarmaError, ModelError
from .model import (
    CARMA,
    GCARMA,
    ConstantJump,
    GaussianJump,
    LaplaceJump,
    LevyBasisSpec,
    ModelSpec,
)


class DocumentError(CarmaError):
    """The document is not valid JSON or does not follow the schema."""


def _get(doc: dict, key: str, kind=None):
    if key not in doc:
        raise DocumentError(f"missing field {key!r}")
    val = doc[key]
    if kind is not None and not isinstance(val, kind):
        raise DocumentError(f"field {key!r} has the wrong type")
    return val


def _number(doc: dict, key: str, default=None) -> float:
    if key not in doc:
        if default is None:
            raise DocumentError(f"missing field {key!r}")
        return default
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise DocumentError(f"field {key!r} must be a number")
    return float(val)


def parse_jump_law(doc: dict):
    law = _get(doc, "law", str)
    if law == "constant":
        return ConstantJump(_number(doc, "value"))
    if law == "gaussian":
        return GaussianJump(_number(doc, "mean", 0.0), _number(doc, "std"))
    if law == "laplace":
        return LaplaceJump(_number(doc, "loc", 0.0), _number(doc, "scale"))
    raise DocumentError(f"unknown jump law {law!r}")


def parse_levy(doc: dict) -> LevyBasisSpec:
    if not isinstance(doc, dict):
        raise DocumentError("'levy' must be an object")
    kind = _get(doc, "type", str)
    beta = _number(doc, "beta", 0.0)
    if kind == "gaussian":
        return LevyBasisSpec.gaussian(_number(doc, "sigma2", 1.0), beta)
    if kind == "compound_poisson":
        return LevyBasisSpec.compound_poisson(_number(doc, "rate"), parse_jump_law(_get(doc, "jump", dict)),
                                              beta=beta, sigma2=_number(doc, "sigma2", 0.0))
    if kind == "stable":
        return LevyBasisSpec.stable(_number(doc, "alpha"), _number(doc, "eta", 1.0), beta)
    raise DocumentError(f"unknown noise type {kind!r}")


def parse_model(doc: dict) -> tuple[ModelSpec, LevyBasisSpec]:
    """Build the model and noise specs; raises DocumentError or ModelError."""
    if not isinstance(doc, dict):
        raise DocumentError("the model document must be a JSON object")
    mode = str(doc.get("mode", CARMA)).upper()
    b = _get(doc, "b", list)
    if mode == CARMA:
        spec = ModelSpec.carma(_get(doc, "a", list), b, doc.get("q"))
    elif mode == GCARMA:
        spec = ModelSpec.gcarma(_get(doc, "A", list), b, _get(doc, "c", list))
    else:
        raise DocumentError(f"unknown mode {mode!r}")
    for key, actual in (("d", spec.d), ("p", spec.p)):
        if key in doc and doc[key] != actual:
            raise DocumentError(f"declared {key}={doc[key]} but the coefficients imply {key}={actual}")
    return spec, parse_levy(_get(doc, "levy"))


def load_model(path) -> tuple[ModelSpec, LevyBasisSpec]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DocumentError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return parse_model(doc)
    except (TypeError, IndexError) as exc:
        raise DocumentError(f"{path}: malformed model: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ModelError):
            raise
        raise DocumentError(f"{path}: malformed model: {exc}") from exc


def model_document(spec: ModelSpec, levy: LevyBasisSpec) -> dict:
    doc = spec.to_dict()
    doc["levy"] = levy.to_dict()
    return doc
