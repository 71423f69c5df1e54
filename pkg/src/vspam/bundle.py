"""Matrix bundles: a directory holding ``manifest.json`` and one raw blob per array.

Blobs are row-major little-endian float64. The manifest lists each array's
name, shape, dtype tag (``f64le``), blob file and optional string tags. The
whole manifest is validated against the blob sizes before any blob is read.
"""
from __future__ import annotations

import json
import os
import re

import numpy as np

from .errors import BundleError

MANIFEST = "manifest.json"
FORMAT = "vspam-matrix-bundle"
VERSION = 1
DTYPE = "f64le"
_NAME = re.compile(r"^[A-Za-z0-9_.-]+$")


def write_bundle(path, arrays, tags=None):
    """Write ``{name: 2D array}`` (1D arrays become a single column).

    ``tags`` maps array names to small dicts stored verbatim in the manifest.
    Output is byte-identical for identical inputs.
    """
    tags = tags or {}
    os.makedirs(path, exist_ok=True)
    entries = []
    for name in arrays:
        if not _NAME.match(name):
            raise BundleError(f"invalid array name {name!r}")
        a = np.asarray(arrays[name], dtype="<f8")
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2:
            raise BundleError(f"array {name!r} must be 1D or 2D, got shape {a.shape}")
        fname = f"{name}.f64"
        with open(os.path.join(path, fname), "wb") as fh:
            fh.write(np.ascontiguousarray(a).tobytes())
        entry = {"name": name, "rows": int(a.shape[0]), "cols": int(a.shape[1]),
                 "dtype": DTYPE, "file": fname}
        if name in tags:
            entry["tags"] = {str(k): v for k, v in tags[name].items()}
        entries.append(entry)
    manifest = {"format": FORMAT, "version": VERSION, "arrays": entries}
    with open(os.path.join(path, MANIFEST), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_manifest(path):
    """Parse and validate a bundle manifest; raises before touching any blob payload."""
    mpath = os.path.join(path, MANIFEST)
    if not os.path.exists(mpath):
        raise FileNotFoundError(f"bundle manifest not found: {mpath}")
    try:
        with open(mpath) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise BundleError(f"{mpath}: manifest is not valid JSON ({exc})") from exc
    if manifest.get("format") != FORMAT:
        raise BundleError(f"{mpath}: unknown bundle format {manifest.get('format')!r}")
    entries = manifest.get("arrays")
    if not isinstance(entries, list):
        raise BundleError(f"{mpath}: 'arrays' must be a list")
    seen = set()
    for e in entries:
        name = e.get("name")
        if not isinstance(name, str) or not _NAME.match(name):
            raise BundleError(f"{mpath}: invalid array name {name!r}")
        if name in seen:
            raise BundleError(f"{mpath}: duplicate array name {name!r}")
        seen.add(name)
        if e.get("dtype") != DTYPE:
            raise BundleError(f"array {name!r}: unsupported dtype {e.get('dtype')!r}")
        rows, cols = e.get("rows"), e.get("cols")
        if not (isinstance(rows, int) and isinstance(cols, int) and rows >= 0 and cols >= 0):
            raise BundleError(f"array {name!r}: rows/cols must be non-negative integers")
        fname = e.get("file")
        if not isinstance(fname, str) or os.path.basename(fname) != fname:
            raise BundleError(f"array {name!r}: invalid blob file {fname!r}")
        bpath = os.path.join(path, fname)
        if not os.path.exists(bpath):
            raise BundleError(f"array {name!r}: blob {fname} is missing")
        expected = rows * cols * 8
        actual = os.path.getsize(bpath)
        if actual != expected:
            raise BundleError(f"array {name!r}: blob has {actual} bytes, manifest declares "
                              f"{rows}x{cols} f64 = {expected} bytes")
    return manifest


def read_bundle(path, names=None):
    """Load arrays (all, or ``names``) as ``{name: (array, tags)}``."""
    manifest = read_manifest(path)
    by_name = {e["name"]: e for e in manifest["arrays"]}
    wanted = list(by_name) if names is None else list(names)
    out = {}
    for name in wanted:
        if name not in by_name:
            raise BundleError(f"{path}: no array named {name!r}")
        e = by_name[name]
        with open(os.path.join(path, e["file"]), "rb") as fh:
            data = np.frombuffer(fh.read(), dtype="<f8").reshape(e["rows"], e["cols"])
        out[name] = (data.astype(float), dict(e.get("tags", {})))
    return out


def read_array(path, name):
    return read_bundle(path, [name])[name]
