"""On-disk model bundles: ``manifest.json`` plus a little-endian float64 ``weights.bin``."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
WEIGHTS = "weights.bin"


class BundleError(ValueError):
    pass


def dumps(obj) -> str:
    """Canonical JSON used for every artifact so reruns are byte-identical."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def save_bundle(path: str | Path, kind: str, meta: dict, arrays: list[tuple[str, np.ndarray]]) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    layout = []
    blobs = []
    offset = 0
    for name, arr in arrays:
        a = np.ascontiguousarray(arr, dtype="<f8")
        layout.append({"name": name, "shape": list(a.shape), "offset": offset, "count": int(a.size)})
        blobs.append(a.tobytes())
        offset += a.size
    blob = b"".join(blobs)
    (path / WEIGHTS).write_bytes(blob)
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "meta": meta,
        "arrays": layout,
        "n_values": offset,
        "weights_sha256": hashlib.sha256(blob).hexdigest(),
    }
    (path / MANIFEST).write_text(dumps(manifest))
    return path


def load_bundle(path: str | Path, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    try:
        manifest = json.loads((path / MANIFEST).read_text())
        blob = (path / WEIGHTS).read_bytes()
    except FileNotFoundError as exc:
        raise BundleError(f"incomplete bundle at {path}: {exc.filename} missing") from None
    if manifest.get("format_version") != FORMAT_VERSION:
        raise BundleError(f"unsupported bundle format {manifest.get('format_version')!r}")
    if kind is not None and manifest.get("kind") != kind:
        raise BundleError(f"expected a {kind!r} bundle, found {manifest.get('kind')!r}")
    flat = np.frombuffer(blob, dtype="<f8")
    if flat.size != manifest["n_values"]:
        raise BundleError(f"weight blob holds {flat.size} values, manifest says {manifest['n_values']}")
    arrays = {}
    for entry in manifest["arrays"]:
        shape = tuple(entry["shape"])
        if int(np.prod(shape, dtype=int)) != entry["count"]:
            raise BundleError(f"shape {shape} of {entry['name']!r} does not match its count")
        seg = flat[entry["offset"]:entry["offset"] + entry["count"]]
        arrays[entry["name"]] = seg.astype(np.float64).reshape(shape)
    return manifest, arrays


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
