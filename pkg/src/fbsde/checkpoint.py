"""Versioned policy checkpoints as numpy archives.

Each checkpoint stores every parameter array as float64 (bit-exact round
trip), the structural metadata needed to rebuild the policy, and optionally
the full text of the run configuration that produced it, so evaluation can
reconstruct the system and cost without any other input.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .policies import make_policy

__all__ = ["FORMAT_VERSION", "save", "load"]

FORMAT_VERSION = 1
_PARAM_PREFIX = "param/"


def save(path, policy, config_text: str | None = None, extra: dict | None = None) -> Path:
    path = Path(path)
    meta = {
        "format_version": FORMAT_VERSION,
        "kind": policy.kind,
        "n": policy.n,
        "v": policy.v,
        "hidden": policy.hidden,
        "n_steps": policy.n_steps,
        "output_scale": policy.output_scale,
        "config": config_text,
        "extra": extra or {},
    }
    arrays = {_PARAM_PREFIX + name: arr for name, arr in policy.params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                 **arrays)
    return path


def load(path):
    """Rebuild (policy, meta) from a checkpoint file."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        if "__meta__" not in data:
            raise CheckpointError(f"{path} is not a policy checkpoint")
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {meta.get('format_version')}")
        params = {key[len(_PARAM_PREFIX):]: np.array(data[key], dtype=np.float64)
                  for key in data.files if key.startswith(_PARAM_PREFIX)}
    policy = make_policy(meta["kind"], meta["n"], meta["v"], meta["hidden"],
                         meta["n_steps"], seed=0, output_scale=meta["output_scale"])
    if set(params) != set(policy.params):
        missing = set(policy.params) ^ set(params)
        raise CheckpointError(f"checkpoint parameter set mismatch: {sorted(missing)}")
    for name, arr in params.items():
        if arr.shape != policy.params[name].shape:
            raise CheckpointError(
                f"shape mismatch for {name!r}: file {arr.shape}, "
                f"expected {policy.params[name].shape}")
        policy.params[name] = arr
    return policy, meta
