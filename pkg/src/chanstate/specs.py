"""Parsing of the short channel/state spec strings used by the CLI and config files.

Channels: ``identity:d=2``, ``erasure:p=0.5[,d=3]``, ``depolarizing:p=..``,
``dephasing:p=..``, ``kraus-file:<path>``.

States: ``bell``, ``trivial``, ``cc-correlated``, ``isotropic:F=..[,d=..]``,
``maximally-mixed:d=..[,dB=..]``, ``bell-diagonal:w=a/b/c/d``,
``horodecki:a=..``, ``file:<path>``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .channels import KrausChannel, channel_from_spec
from .states import LabeledState, maximally_entangled, maximally_mixed, trivial_state
from .superactivation import bell_diagonal, horodecki_3x3, isotropic

__all__ = ["parse_channel", "parse_state", "split_spec"]

STATE_LABELS = ("A2", "B2")


def split_spec(spec: str) -> tuple[str, dict[str, str]]:
    """``"kind:k=v,k2=v2"`` -> ``("kind", {"k": "v", "k2": "v2"})``."""
    kind, _, rest = spec.strip().partition(":")
    params: dict[str, str] = {}
    if rest:
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise ValueError(f"malformed parameter {item!r} in spec {spec!r}")
            params[key.strip()] = value.strip()
    return kind.strip(), params


def _float(params: dict, key: str, spec: str, default=None) -> float:
    if key not in params:
        if default is None:
            raise ValueError(f"spec {spec!r} is missing parameter {key!r}")
        return default
    try:
        return float(params[key])
    except ValueError:
        raise ValueError(f"parameter {key}={params[key]!r} in {spec!r} is not a number") from None


def _int(params: dict, key: str, spec: str, default=None) -> int:
    value = _float(params, key, spec, default)
    if value != int(value) or value < 1:
        raise ValueError(f"parameter {key} in {spec!r} must be a positive integer")
    return int(value)


def _check_keys(params: dict, allowed: set[str], spec: str) -> None:
    extra = set(params) - allowed
    if extra:
        raise ValueError(f"unknown parameters {sorted(extra)} in spec {spec!r}")


def parse_channel(spec: str) -> KrausChannel:
    if spec.startswith("kraus-file:"):
        path = Path(spec.split(":", 1)[1])
        return channel_from_spec(json.loads(path.read_text()))
    kind, params = split_spec(spec)
    if kind == "identity":
        _check_keys(params, {"d"}, spec)
        return channel_from_spec({"kind": "identity", "d": _int(params, "d", spec, 2)})
    if kind == "erasure":
        _check_keys(params, {"p", "d"}, spec)
        return channel_from_spec({"kind": "erasure", "p": _float(params, "p", spec), "d": _int(params, "d", spec, 2)})
    if kind in ("depolarizing", "dephasing"):
        _check_keys(params, {"p"}, spec)
        return channel_from_spec({"kind": kind, "p": _float(params, "p", spec)})
    raise ValueError(f"unknown channel kind {kind!r} in spec {spec!r}")


def _complex_array(raw) -> np.ndarray:
    arr = np.array(raw, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError("state entries must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def load_state_file(path: str | Path) -> LabeledState:
    """JSON ``{"systems": [[label, dim], ...], "density" | "vector": [re, im] pairs}``."""
    doc = json.loads(Path(path).read_text())
    systems = [tuple(s) for s in doc["systems"]]
    if "density" in doc:
        return LabeledState(_complex_array(doc["density"]), systems)
    if "vector" in doc:
        return LabeledState(_complex_array(doc["vector"]), systems)
    raise ValueError(f"state file {path} needs a 'density' or 'vector' entry")


def parse_state(spec: str) -> LabeledState:
    if spec.startswith("file:"):
        return load_state_file(spec.split(":", 1)[1])
    kind, params = split_spec(spec)
    if kind == "bell":
        _check_keys(params, set(), spec)
        return maximally_entangled(2, STATE_LABELS)
    if kind == "trivial":
        _check_keys(params, set(), spec)
        return trivial_state(STATE_LABELS)
    if kind == "cc-correlated":
        _check_keys(params, set(), spec)
        return LabeledState(np.diag([0.5, 0, 0, 0.5]), [(STATE_LABELS[0], 2), (STATE_LABELS[1], 2)])
    if kind == "isotropic":
        _check_keys(params, {"F", "d"}, spec)
        return isotropic(_float(params, "F", spec), _int(params, "d", spec, 2), STATE_LABELS)
    if kind == "maximally-mixed":
        _check_keys(params, {"d", "dB"}, spec)
        return maximally_mixed([(STATE_LABELS[0], _int(params, "d", spec)), (STATE_LABELS[1], _int(params, "dB", spec, 1))])
    if kind == "bell-diagonal":
        _check_keys(params, {"w"}, spec)
        if "w" not in params:
            raise ValueError(f"spec {spec!r} is missing parameter 'w'")
        return bell_diagonal([float(x) for x in params["w"].split("/")], STATE_LABELS)
    if kind == "horodecki":
        _check_keys(params, {"a"}, spec)
        return horodecki_3x3(_float(params, "a", spec), STATE_LABELS)
    raise ValueError(f"unknown state kind {kind!r} in spec {spec!r}")
