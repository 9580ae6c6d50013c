"""Load/save any fitted model as a self-contained JSON bundle.

Every bundle carries ``schema_version`` and a ``kind`` tag; loading dispatches
on the tag so that the streaming and explanation tools accept a bundle from
any method without knowing which one produced it.
"""
from __future__ import annotations

import json
from pathlib import Path

from .baselines import DistTargetModel, LrOvrModel, MlpModel, WkpiStaticModel
from .model import MildModel

_KINDS = {
    "mild": MildModel,
    "lr": LrOvrModel,
    "wkpi": WkpiStaticModel,
    "dist": DistTargetModel,
    "mlp": MlpModel,
}


def save_bundle(model, path, thresholds=None, metadata: dict | None = None) -> None:
    """Write a bundle; optionally embed tuned alert thresholds and provenance."""
    d = model.to_dict()
    if d.get("kind") not in _KINDS:
        raise ValueError(f"model serialized an unknown kind {d.get('kind')!r}")
    if thresholds is not None:
        d["thresholds"] = [float(t) for t in thresholds]
    if metadata:
        d["metadata"] = metadata
    with open(path, "w") as fh:
        json.dump(d, fh)
        fh.write("\n")


def _read(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no model bundle at {path}")
    with open(path) as fh:
        d = json.load(fh)
    if d.get("kind") not in _KINDS:
        raise ValueError(f"unknown bundle kind {d.get('kind')!r} in {path}")
    return d


def load_bundle(path):
    d = _read(path)
    return _KINDS[d["kind"]].from_dict(d)


def load_bundle_with_thresholds(path):
    """Returns ``(model, thresholds_or_None)``."""
    d = _read(path)
    taus = d.get("thresholds")
    return _KINDS[d["kind"]].from_dict(d), None if taus is None else list(taus)
