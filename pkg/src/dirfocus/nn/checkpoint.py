"""Parameter checkpoints: one float64 little-endian blob plus a JSON structure map."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .layers import Module

__all__ = ["state_dict", "load_state_dict", "save_checkpoint", "load_checkpoint"]


def state_dict(module: Module) -> dict[str, np.ndarray]:
    """Copies of every parameter and buffer keyed by dotted name."""
    out = {name: p.data.copy() for name, p in module.named_parameters()}
    out.update({name: b.copy() for name, b in module.named_buffers()})
    return out


def load_state_dict(module: Module, state: dict) -> None:
    params = dict(module.named_parameters())
    buffers = dict(module.named_buffers())
    expected = set(params) | set(buffers)
    if set(state) != expected:
        raise ValueError(
            f"checkpoint mismatch: missing {sorted(expected - set(state))}, unexpected {sorted(set(state) - expected)}"
        )
    for name, value in state.items():
        target = params[name].data if name in params else buffers[name]
        if target.shape != np.shape(value):
            raise ValueError(f"checkpoint entry {name}: shape {np.shape(value)} != model shape {target.shape}")
        # in place, so running-stat buffers stay shared with their layers
        target[...] = value


def save_checkpoint(path, module: Module, metadata: dict | None = None) -> Path:
    """Write ``<stem>.bin`` and ``<stem>.json``; returns the blob path."""
    path = Path(path).with_suffix(".bin")
    path.parent.mkdir(parents=True, exist_ok=True)
    state = state_dict(module)
    layout, offset, chunks = {}, 0, []
    for name, arr in state.items():
        layout[name] = {"offset": offset, "shape": list(arr.shape)}
        offset += arr.size
        chunks.append(arr.reshape(-1))
    blob = np.concatenate(chunks) if chunks else np.zeros(0)
    blob.astype("<f8").tofile(path)
    header = {"n_values": int(offset), "layout": layout}
    if metadata:
        header["metadata"] = metadata
    path.with_suffix(".json").write_text(json.dumps(header, indent=1))
    return path


def load_checkpoint(path, module: Module | None = None) -> tuple[dict, dict]:
    """Read a checkpoint; if ``module`` is given, load it in place.

    Returns ``(state, header)``.
    """
    path = Path(path).with_suffix(".bin")
    header = json.loads(path.with_suffix(".json").read_text())
    blob = np.fromfile(path, dtype="<f8")
    if blob.size != header["n_values"]:
        raise ValueError(f"{path}: {blob.size} values, header says {header['n_values']}")
    state = {}
    for name, entry in header["layout"].items():
        n = int(np.prod(entry["shape"])) if entry["shape"] else 1
        state[name] = blob[entry["offset"]:entry["offset"] + n].reshape(entry["shape"]).copy()
    if module is not None:
        load_state_dict(module, state)
    return state, header
