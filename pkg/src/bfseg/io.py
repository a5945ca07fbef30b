"""File helpers: atomic writes, 8-bit PNG I/O and checkpoints."""

from __future__ import annotations

import contextlib
import hashlib
import io
import json
import os
import tempfile
import zipfile
from pathlib import Path

import numpy as np
from PIL import Image

CHECKPOINT_FORMAT = "bfseg-checkpoint"
CHECKPOINT_VERSION = 1
# fixed member timestamp so identical content gives identical bytes
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


@contextlib.contextmanager
def atomic_path(path):
    """Yield a temporary path next to ``path``; rename over it on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def write_bytes_atomic(path, data: bytes):
    with atomic_path(path) as tmp:
        tmp.write_bytes(data)


def write_text_atomic(path, text: str):
    write_bytes_atomic(path, text.encode("utf-8"))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def to_uint8(a) -> np.ndarray:
    return np.clip(np.rint(np.asarray(a, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_png(path, array: np.ndarray):
    """Write a uint8 grayscale (H, W) or RGB/RGBA (H, W, 3|4) array."""
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise TypeError("write_png expects uint8 data")
    buf = io.BytesIO()
    Image.fromarray(array).save(buf, format="PNG")
    write_bytes_atomic(path, buf.getvalue())


def read_png(path, mode: str | None = None) -> np.ndarray:
    with Image.open(path) as im:
        if mode is not None and im.mode != mode:
            im = im.convert(mode)
        return np.array(im)


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------


def save_checkpoint(path, params: dict, config: dict, extra: dict | None = None):
    """Zip of ``.npy`` members plus a JSON header; bytes depend only on content."""
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": config,
        "extra": extra or {},
        "arrays": list(params),
    }
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        info = zipfile.ZipInfo("header.json", date_time=_ZIP_EPOCH)
        zf.writestr(info, json.dumps(header, sort_keys=True, indent=1), compress_type=zipfile.ZIP_DEFLATED)
        for name, arr in params.items():
            member = io.BytesIO()
            np.lib.format.write_array(member, np.ascontiguousarray(arr), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_ZIP_EPOCH)
            zf.writestr(info, member.getvalue(), compress_type=zipfile.ZIP_DEFLATED)
    write_bytes_atomic(path, buf.getvalue())


def load_checkpoint(path):
    """Return ``(params, config, extra)``."""
    with zipfile.ZipFile(path) as zf:
        header = json.loads(zf.read("header.json"))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path} is not a checkpoint")
        if header["version"] > CHECKPOINT_VERSION:
            raise ValueError(f"checkpoint version {header['version']} is newer than supported")
        params = {}
        for name in header["arrays"]:
            with zf.open(f"{name}.npy") as f:
                params[name] = np.lib.format.read_array(io.BytesIO(f.read()), allow_pickle=False)
    return params, header["config"], header.get("extra", {})
