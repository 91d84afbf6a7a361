"""Model files: JSON lines, one section per line.

Layout: a ``header`` line (format version, classes, priors, metadata), one
``variable`` line per model variable, and a closing ``end`` line holding the
variable count. Floats are written with ``repr`` precision, so a loaded model
predicts bit-for-bit like the saved one.
"""

from __future__ import annotations

import json

import numpy as np

from .aggregates import AggregateSpec
from .classifier import ModelVariable, SNBModel
from .discretize import partition_from_json
from .errors import ModelFormatError

FORMAT_VERSION = 1


def _variable_doc(v: ModelVariable) -> dict:
    return {
        "section": "variable",
        "name": v.name,
        "spec": None if v.spec is None else v.spec.to_json(),
        "partition": v.partition.to_json(),
        "probs": v.probs.tolist(),
        "weight": v.weight,
        "construction_cost": v.construction_cost,
        "level": v.level,
        "iqr": v.iqr,
    }


def save_model(model: SNBModel, path) -> None:
    header = {
        "section": "header",
        "format_version": FORMAT_VERSION,
        "classes": list(model.classes),
        "priors": model.priors.tolist(),
        "metadata": model.metadata,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for v in model.variables:
            fh.write(json.dumps(_variable_doc(v), sort_keys=True) + "\n")
        fh.write(json.dumps({"section": "end", "n_variables": len(model.variables)}) + "\n")


def _parse_lines(path) -> list[dict]:
    docs = []
    with open(path) as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                docs.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ModelFormatError(f"{path}: line {n} is not valid JSON ({exc.msg})") from None
    return docs


def load_model(path) -> SNBModel:
    docs = _parse_lines(path)
    if not docs or docs[0].get("section") != "header":
        raise ModelFormatError(f"{path}: missing section 'header'")
    header = docs[0]
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: model format version {version!r} is not supported "
                               f"(this build reads version {FORMAT_VERSION})")
    body = docs[1:]
    if not body or body[-1].get("section") != "end":
        got = sum(d.get("section") == "variable" for d in body)
        raise ModelFormatError(f"{path}: missing section 'end' (file truncated after {got} variable(s))")
    expected = body[-1]["n_variables"]
    variables = []
    for d in body[:-1]:
        if d.get("section") != "variable":
            raise ModelFormatError(f"{path}: unexpected section {d.get('section')!r}")
        variables.append(ModelVariable(
            d["name"], partition_from_json(d["partition"]), np.array(d["probs"], dtype=float),
            d["weight"], None if d["spec"] is None else AggregateSpec.from_json(d["spec"]),
            d["construction_cost"], d["level"], d["iqr"],
        ))
    if len(variables) != expected:
        raise ModelFormatError(f"{path}: missing section 'variable' ({len(variables)} of {expected} present)")
    return SNBModel(tuple(header["classes"]), np.array(header["priors"], dtype=float), tuple(variables),
                    header.get("metadata", {}))
