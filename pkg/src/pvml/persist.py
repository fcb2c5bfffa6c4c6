"""Self-describing model files.

A saved model is one JSON document that carries its own provenance, the
feature and output domains it was trained over, and its parameters, so no
external metadata store is needed to identify it.  Every float in domains
and parameters is stored as a shortest round-trip decimal string, which
keeps reloaded models bit-identical in their predictions even across JSON
implementations that mangle number precision.  Keys are emitted sorted, so
saving the same model twice produces identical bytes.
"""

from __future__ import annotations

import json
from typing import Callable

import numpy as np

from .core import (
    CategoricalDomain,
    FeatureDomain,
    FeatureInfo,
    Model,
    OutputDomain,
    RealDomain,
)
from .ensemble import ENSEMBLE_MODEL_CLASS, EnsembleModel
from .errors import FormatError, TaskMismatch, UnknownModelClass
from .optimize import LINEAR_MODEL_CLASS, LinearSgdModel
from .provenance import from_json_value, to_json_value
from .trees import TREE_MODEL_CLASS, LeafNode, SplitNode, TreeModel, TreeNode

FORMAT_NAME = "PVML"
FORMAT_VERSION = 1


def _f2s(value: float) -> str:
    return repr(float(value))


def _s2f(text) -> float:
    try:
        return float(text)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad float literal {text!r}") from exc


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------

def feature_domain_to_json(domain: FeatureDomain) -> dict:
    return {
        "features": {
            name: {
                "id": info.id,
                "count": info.count,
                "min": _f2s(info.min),
                "max": _f2s(info.max),
                "mean": _f2s(info.mean),
                "variance": _f2s(info.variance),
            }
            for name, info in domain.items()
        }
    }


def feature_domain_from_json(node: dict) -> FeatureDomain:
    try:
        infos = {
            name: FeatureInfo(
                id=entry["id"],
                count=entry["count"],
                min=_s2f(entry["min"]),
                max=_s2f(entry["max"]),
                mean=_s2f(entry["mean"]),
                variance=_s2f(entry["variance"]),
            )
            for name, entry in node["features"].items()
        }
        return FeatureDomain(infos)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed feature domain: {exc}") from exc


def output_domain_to_json(domain: OutputDomain) -> dict:
    if isinstance(domain, CategoricalDomain):
        return {"type": "categorical", "counts": dict(sorted(domain.counts.items()))}
    return {
        "type": "real",
        "min": _f2s(domain.min),
        "max": _f2s(domain.max),
        "mean": _f2s(domain.mean),
        "variance": _f2s(domain.variance),
        "count": domain.count,
    }


def output_domain_from_json(node: dict) -> OutputDomain:
    try:
        if node["type"] == "categorical":
            return CategoricalDomain(dict(node["counts"]))
        if node["type"] == "real":
            return RealDomain(
                _s2f(node["min"]), _s2f(node["max"]), _s2f(node["mean"]),
                _s2f(node["variance"]), node["count"],
            )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed output domain: {exc}") from exc
    raise FormatError(f"unknown output domain type {node.get('type')!r}")


# ---------------------------------------------------------------------------
# Per-class parameter codecs
# ---------------------------------------------------------------------------

def _linear_params(model: LinearSgdModel) -> dict:
    return {"weights": [[_f2s(v) for v in row] for row in model.weights]}


def _linear_restore(container: dict, name, prov, fd, od) -> LinearSgdModel:
    rows = container["parameters"]["weights"]
    weights = np.array([[_s2f(v) for v in row] for row in rows])
    return LinearSgdModel(name, prov, fd, od, weights)


def _tree_node_to_json(node: TreeNode) -> dict:
    if isinstance(node, SplitNode):
        return {
            "kind": "split",
            "feature": node.feature_id,
            "threshold": _f2s(node.threshold),
            "left": _tree_node_to_json(node.left),
            "right": _tree_node_to_json(node.right),
        }
    leaf: dict = {"kind": "leaf", "n": node.n_examples}
    if node.counts is not None:
        leaf["counts"] = {label: _f2s(w) for label, w in sorted(node.counts.items())}
    else:
        leaf["mean"] = _f2s(node.mean)
    return leaf


def _tree_node_from_json(node: dict) -> TreeNode:
    if node["kind"] == "split":
        return SplitNode(
            node["feature"],
            _s2f(node["threshold"]),
            _tree_node_from_json(node["left"]),
            _tree_node_from_json(node["right"]),
        )
    if node["kind"] == "leaf":
        if "counts" in node:
            return LeafNode(node["n"], counts={l: _s2f(w) for l, w in node["counts"].items()})
        return LeafNode(node["n"], mean=_s2f(node["mean"]))
    raise FormatError(f"unknown tree node kind {node.get('kind')!r}")


def _tree_params(model: TreeModel) -> dict:
    return {"root": _tree_node_to_json(model.root)}


def _tree_restore(container: dict, name, prov, fd, od) -> TreeModel:
    return TreeModel(name, prov, fd, od, _tree_node_from_json(container["parameters"]["root"]))


def _ensemble_params(model: EnsembleModel) -> dict:
    return {
        "members": [model_to_container(m) for m in model.members],
        "memberWeights": [_f2s(w) for w in model.member_weights],
    }


def _ensemble_restore(container: dict, name, prov, fd, od) -> EnsembleModel:
    params = container["parameters"]
    members = [_model_from_container(m) for m in params["members"]]
    weights = [_s2f(w) for w in params["memberWeights"]]
    return EnsembleModel(name, prov, fd, od, members, weights)


_TO_PARAMS: dict[str, Callable] = {
    LINEAR_MODEL_CLASS: _linear_params,
    TREE_MODEL_CLASS: _tree_params,
    ENSEMBLE_MODEL_CLASS: _ensemble_params,
}

_RESTORERS: dict[str, Callable] = {
    LINEAR_MODEL_CLASS: _linear_restore,
    TREE_MODEL_CLASS: _tree_restore,
    ENSEMBLE_MODEL_CLASS: _ensemble_restore,
}


def register_model_class(
    class_name: str, to_params: Callable[[Model], dict], restore: Callable
) -> None:
    """Open registry hook for model classes defined outside this library."""
    _TO_PARAMS[class_name] = to_params
    _RESTORERS[class_name] = restore


# ---------------------------------------------------------------------------
# Containers
# ---------------------------------------------------------------------------

def model_to_container(model: Model) -> dict:
    to_params = _TO_PARAMS.get(model.model_class)
    if to_params is None:
        raise UnknownModelClass(f"no serializer registered for {model.model_class!r}")
    return {
        "formatName": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "modelClass": model.model_class,
        "name": model.name,
        "provenance": to_json_value(model.provenance),
        "featureDomain": feature_domain_to_json(model.feature_domain),
        "outputDomain": output_domain_to_json(model.output_domain),
        "parameters": to_params(model),
    }


def _model_from_container(container: dict) -> Model:
    if not isinstance(container, dict):
        raise FormatError("model container must be a JSON object")
    if container.get("formatName") != FORMAT_NAME:
        raise FormatError("not a PVML model file (bad or missing formatName)")
    if container.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported container version {container.get('version')!r}")
    class_name = container.get("modelClass")
    restore = _RESTORERS.get(class_name)
    if restore is None:
        raise UnknownModelClass(f"model class {class_name!r} is not registered")
    try:
        prov = from_json_value(container["provenance"])
        fd = feature_domain_from_json(container["featureDomain"])
        od = output_domain_from_json(container["outputDomain"])
        return restore(container, container.get("name", class_name), prov, fd, od)
    except UnknownModelClass:
        raise
    except FormatError:
        raise
    except Exception as exc:
        raise FormatError(f"malformed model container: {exc}") from exc


def save_model(model: Model, path: str) -> None:
    """Write the model container; byte-deterministic for a fixed model."""
    text = json.dumps(model_to_container(model), sort_keys=True, indent=2)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
        fh.write("\n")


def load_model(path: str, expected_task: str | None = None) -> Model:
    """Reload a model, checking the task type before handing it back.

    ``expected_task`` is "categorical" or "real"; passing the wrong one
    raises :class:`TaskMismatch` instead of letting a regression model
    silently answer classification queries (or vice versa).  ``None`` skips
    the check, for tooling that only inspects the file.
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        container = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not valid JSON: {exc.msg} (line {exc.lineno})") from exc
    model = _model_from_container(container)
    if expected_task is not None and model.task != expected_task:
        raise TaskMismatch(
            f"model performs {model.task} prediction but {expected_task} was requested"
        )
    return model
