"""Writers for the GGFM filter-map format and the dataset manifest.

Wire format (little-endian throughout):

    magic "GGFM" | u16 version=1 | str instance_id | str layer
    | u32 C | u32 H | u32 W | C*H*W float32 values, C-major then H then W
    str = u16 byte-length | UTF-8 bytes

The manifest is line-oriented UTF-8: ``key<TAB>value`` header lines
(version, n, m, layers, optional notes) followed by one
``id<TAB><instance_id>`` line per instance in row order; the last ``m``
instances are the development rows. This mirrors the labeling engine's
reader byte for byte so the two sides can be developed independently.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAGIC = b"GGFM"
VERSION = 1


def _pack_string(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError(f"string too long for format ({len(raw)} bytes)")
    return struct.pack("<H", len(raw)) + raw


def write_filtermap(path, instance_id: str, layer: str, data: np.ndarray) -> None:
    """Serialize one C x H x W activation tensor. Deterministic bytes."""
    data = np.asarray(data)
    if data.ndim != 3 or min(data.shape) < 1:
        raise ValueError(f"need a C x H x W tensor with positive dims, got {data.shape}")
    if not np.all(np.isfinite(data)):
        raise ValueError("activations contain non-finite values")
    c, h, w = data.shape
    blob = (
        MAGIC
        + struct.pack("<H", VERSION)
        + _pack_string(instance_id)
        + _pack_string(layer)
        + struct.pack("<III", c, h, w)
        + np.ascontiguousarray(data, dtype="<f4").tobytes()
    )
    Path(path).write_bytes(blob)


def filtermap_filename(instance_id: str, layer: str) -> str:
    return f"{instance_id}__{layer}.ggfm"


def write_manifest(path, instance_ids: Sequence[str], dev_count: int,
                   layers: Iterable[str], notes: str = "") -> None:
    ids = list(instance_ids)
    if not 0 <= dev_count <= len(ids):
        raise ValueError(f"dev_count {dev_count} out of range for {len(ids)} instances")
    lines = ["# filter-map export manifest", "version\t1"]
    lines.append(f"n\t{len(ids) - dev_count}")
    lines.append(f"m\t{dev_count}")
    lines.append("layers\t" + ",".join(layers))
    if notes:
        lines.append(f"notes\t{notes}")
    lines.extend(f"id\t{s}" for s in ids)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
