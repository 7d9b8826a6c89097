"""Checkpoint directories: a JSON manifest plus raw float32 tensor blobs.

Layout is deliberately timestamp-free so identical runs write identical
bytes: `manifest.json` (sorted keys) describes the architecture, the tensor
files, and caller-supplied provenance; each tensor lives in
`tensors/NN_name.f32` as little-endian float32, C order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from fcu import nn

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Unreadable, mismatched, or stale checkpoint payload."""


def _blob_name(index: int, tensor_name: str) -> str:
    return f"{index:02d}_{tensor_name.replace('.', '_')}.f32"


def save_checkpoint(path, model: nn.NetworkModel, provenance: dict, force: bool = False) -> Path:
    """Write `model` under the directory `path`; refuses to overwrite unless forced."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if manifest_path.exists() and not force:
        raise CheckpointError(f"{root}: checkpoint already exists (use force to overwrite)")
    (root / "tensors").mkdir(parents=True, exist_ok=True)
    model.params.require_finite("save_checkpoint")

    tensors = []
    for i, name in enumerate(model.params.names):
        arr = model.params[name]
        meta = model.params.meta[name]
        fname = _blob_name(i, name)
        (root / "tensors" / fname).write_bytes(
            np.ascontiguousarray(arr, dtype="<f4").tobytes()
        )
        tensors.append(
            {
                "name": name,
                "file": f"tensors/{fname}",
                "shape": list(arr.shape),
                "dtype": "<f4",
                "kind": meta.kind,
                "conv_dims": list(meta.conv_dims) if meta.conv_dims else None,
            }
        )
    manifest = {
        "format_version": FORMAT_VERSION,
        "architecture": model.descriptor(),
        "tensors": tensors,
        "provenance": provenance,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return root


def load_checkpoint(path) -> tuple[nn.NetworkModel, dict]:
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise CheckpointError(f"{root}: no manifest.json; not a checkpoint")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{root}: unreadable manifest: {exc}") from exc
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{root}: unsupported format version {version!r}")

    try:
        template = nn.model_from_descriptor(manifest["architecture"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{root}: bad architecture record: {exc}") from exc

    entries = {}
    recorded = {t["name"] for t in manifest["tensors"]}
    if recorded != set(template.params.names):
        raise CheckpointError(f"{root}: tensor list does not match the architecture")
    for t in manifest["tensors"]:
        blob_path = root / t["file"]
        if not blob_path.exists():
            raise CheckpointError(f"{root}: missing tensor blob {t['file']}")
        shape = tuple(t["shape"])
        expected = template.params[t["name"]].shape
        if shape != expected:
            raise CheckpointError(
                f"{root}: {t['name']} has shape {shape}, architecture wants {expected}"
            )
        raw = np.frombuffer(blob_path.read_bytes(), dtype="<f4")
        if raw.size != int(np.prod(shape)):
            raise CheckpointError(f"{root}: {t['file']} holds {raw.size} values, expected {np.prod(shape)}")
        arr = raw.reshape(shape).astype(np.float64)
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"{root}: non-finite values in {t['name']}")
        entries[t["name"]] = arr
    params = nn.ParameterSet(entries, template.params.meta)
    return template.with_params(params), manifest.get("provenance", {})
