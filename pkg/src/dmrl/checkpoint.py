"""JSON checkpoints for policies and dynamics models.

Parameters are stored as ``repr`` strings, which round-trip every float64
exactly, denormals included.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from .core import HEADS, HIDDEN_ACTIVATIONS, MlpSpec
from .dynamics import DynamicsModel
from .policy import Policy

FORMAT_VERSION = 1
KINDS = ("policy", "dynamics")


class CheckpointError(ValueError):
    pass


def _floats(values: np.ndarray) -> list[str]:
    return [repr(float(v)) for v in np.asarray(values, dtype=np.float64).ravel()]


def _parse_floats(values: Any, name: str, length: int | None = None) -> np.ndarray:
    if not isinstance(values, list) or not all(isinstance(v, str) for v in values):
        raise CheckpointError(f"{name} must be a list of decimal strings")
    try:
        out = np.array([float(v) for v in values], dtype=np.float64)
    except ValueError as exc:
        raise CheckpointError(f"{name} holds a non-numeric entry") from exc
    if length is not None and len(out) != length:
        raise CheckpointError(f"{name} has {len(out)} entries, expected {length}")
    return out


def spec_to_dict(spec: MlpSpec) -> dict[str, list]:
    return {"dims": spec.dims, "activations": [act for _, act in spec.hidden] + [spec.head]}


def spec_from_dict(data: Any) -> MlpSpec:
    try:
        dims = [int(d) for d in data["dims"]]
        acts = [str(a) for a in data["activations"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError("spec needs integer 'dims' and string 'activations'") from exc
    if len(dims) < 3 or len(acts) != len(dims) - 1:
        raise CheckpointError("spec dims/activations are inconsistent")
    if any(a not in HIDDEN_ACTIVATIONS for a in acts[:-1]) or acts[-1] not in HEADS:
        raise CheckpointError(f"unsupported activations {acts}")
    try:
        return MlpSpec(dims[0], tuple(zip(dims[1:-1], acts[:-1])), (dims[-1], acts[-1]))
    except ValueError as exc:
        raise CheckpointError(str(exc)) from exc


def to_document(artifact: Policy | DynamicsModel) -> dict[str, Any]:
    if isinstance(artifact, Policy):
        kind = "policy"
        normalization = {"mean": _floats(artifact.obs_mean), "std": _floats(artifact.obs_std)}
    elif isinstance(artifact, DynamicsModel):
        kind = "dynamics"
        normalization = {
            "mean": _floats(artifact.obs_mean),
            "std": _floats(artifact.obs_std),
            "delta_scale": _floats(artifact.delta_scale),
        }
    else:
        raise TypeError(f"cannot checkpoint {type(artifact).__name__}")
    return {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "spec": spec_to_dict(artifact.spec),
        "params": _floats(artifact.params),
        "normalization": normalization,
    }


def from_document(doc: Any, expected_spec: MlpSpec | None = None, expected_kind: str | None = None):
    if not isinstance(doc, dict):
        raise CheckpointError("checkpoint must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format_version {version!r}, expected {FORMAT_VERSION}")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise CheckpointError(f"unknown checkpoint kind {kind!r}")
    if expected_kind is not None and kind != expected_kind:
        raise CheckpointError(f"expected a {expected_kind} checkpoint, found {kind}")
    spec = spec_from_dict(doc.get("spec"))
    if expected_spec is not None and spec != expected_spec:
        raise CheckpointError(f"checkpoint spec {spec.dims} does not match the expected {expected_spec.dims}")
    params = _parse_floats(doc.get("params"), "params", spec.n_params)
    norm = doc.get("normalization")
    if not isinstance(norm, dict):
        raise CheckpointError(f"{kind} checkpoint needs normalization statistics")
    try:
        if kind == "policy":
            n = spec.input_dim
            return Policy(
                spec,
                params,
                obs_mean=_parse_floats(norm.get("mean"), "normalization.mean", n),
                obs_std=_parse_floats(norm.get("std"), "normalization.std", n),
            )
        n = spec.output_dim
        return DynamicsModel(
            spec,
            params,
            obs_mean=_parse_floats(norm.get("mean"), "normalization.mean", n),
            obs_std=_parse_floats(norm.get("std"), "normalization.std", n),
            delta_scale=_parse_floats(norm.get("delta_scale"), "normalization.delta_scale", n),
        )
    except ValueError as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(str(exc)) from exc


def save_checkpoint(path: str | Path, artifact: Policy | DynamicsModel) -> Path:
    """Write atomically so a crash never leaves a half-written checkpoint."""
    path = Path(path)
    text = json.dumps(to_document(artifact), indent=1)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def load_checkpoint(path: str | Path, expected_spec: MlpSpec | None = None, expected_kind: str | None = None):
    try:
        text = Path(path).read_text()
    except FileNotFoundError as exc:
        raise CheckpointError(f"checkpoint not found: {path}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc
    return from_document(doc, expected_spec, expected_kind)
