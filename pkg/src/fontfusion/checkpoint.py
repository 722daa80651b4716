"""Single-file checkpoint container with deterministic bytes.

A checkpoint is a ZIP archive holding one ``.npy`` entry per named array
(dotted names such as ``g.blocks.0.conv.weight``) plus a ``meta.json``
entry for scalar metadata.  Every entry is stored uncompressed with a
fixed timestamp and the listing is sorted, so writing the same state
twice produces byte-identical files.  Entries are self-describing: the
``.npy`` headers carry name, shape, dtype, and little-endian payloads
readable by any array library.

Writes are atomic (temp file in the same directory, then rename), so a
crash can never leave a truncated file at the published path.
"""

from __future__ import annotations

import io
import json
import os
import tempfile
import zipfile
from pathlib import Path
from typing import Mapping

import numpy as np

FORMAT_VERSION = 1

_FIXED_DATE = (1980, 1, 1, 0, 0, 0)
_META_ENTRY = "meta.json"


class CheckpointCorrupt(ValueError):
    """The file is not a readable checkpoint (truncated, garbled, or
    missing required entries)."""


class CheckpointVersionMismatch(ValueError):
    """The file's format version differs from the supported one."""


def _entry(name: str, payload: bytes) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_FIXED_DATE)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o600 << 16
    return info


def write_checkpoint_file(path: str | Path, arrays: Mapping[str, np.ndarray], meta: dict) -> None:
    """Atomically write named arrays plus JSON metadata to ``path``."""
    path = Path(path)
    if _META_ENTRY in arrays:
        raise ValueError(f"array name {_META_ENTRY!r} collides with the metadata entry")
    meta = dict(meta)
    meta.setdefault("format_version", FORMAT_VERSION)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            with zipfile.ZipFile(fh, "w", zipfile.ZIP_STORED) as zf:
                meta_bytes = (json.dumps(meta, sort_keys=True, indent=2) + "\n").encode()
                zf.writestr(_entry(_META_ENTRY, meta_bytes), meta_bytes)
                for name in sorted(arrays):
                    buf = io.BytesIO()
                    # asarray keeps 0-d arrays 0-d (ascontiguousarray would
                    # promote them to shape (1,) and break exact roundtrips)
                    np.lib.format.write_array(buf, np.asarray(arrays[name], order="C"))
                    payload = buf.getvalue()
                    zf.writestr(_entry(name + ".npy", payload), payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_checkpoint_file(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint back as (arrays, meta).

    Raises ``FileNotFoundError`` when the path does not exist,
    ``CheckpointCorrupt`` for unreadable files, and
    ``CheckpointVersionMismatch`` when the format version differs.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    try:
        with zipfile.ZipFile(path) as zf:
            names = zf.namelist()
            if _META_ENTRY not in names:
                raise CheckpointCorrupt(f"{path}: missing {_META_ENTRY}")
            meta = json.loads(zf.read(_META_ENTRY))
            arrays: dict[str, np.ndarray] = {}
            for name in names:
                if name == _META_ENTRY:
                    continue
                if not name.endswith(".npy"):
                    raise CheckpointCorrupt(f"{path}: unexpected entry {name!r}")
                arrays[name[:-4]] = np.lib.format.read_array(io.BytesIO(zf.read(name)))
    except (zipfile.BadZipFile, json.JSONDecodeError, ValueError, EOFError, OSError) as exc:
        if isinstance(exc, (CheckpointCorrupt, CheckpointVersionMismatch)):
            raise
        raise CheckpointCorrupt(f"{path}: {exc}") from exc
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionMismatch(
            f"{path}: file has format version {version}, this build supports {FORMAT_VERSION}"
        )
    return arrays, meta
