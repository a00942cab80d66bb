"""On-disk and in-memory data model.

Binary formats (all integers little-endian, all floats IEEE-754 binary32):

  filter-map file (".ggfm")
      magic "GGFM" | u16 version=1 | str instance_id | str layer
      | u32 C | u32 H | u32 W | C*H*W ``f32`` values in C-major
      (then H, then W) order
  affinity file (".ggam")
      magic "GGAM" | u16 version=1 | u32 N | u32 alpha
      | alpha descriptor records (str layer | u32 z)
      | N*(alpha*N) ``f32`` scores, row-major
  str = u16 byte-length | UTF-8 bytes

Text formats are line-oriented UTF-8. The manifest holds ``key<TAB>value``
header lines followed by ``id<TAB><instance_id>`` rows in row order; dev-set
and truth files hold ``instance_id<TAB>class_index`` rows. Lines starting
with ``#`` are comments.

Development instances occupy the last ``m_dev`` rows of the instance list,
so a matrix built in manifest order keeps its labeled rows at the tail.
All types are immutable after construction (arrays are marked read-only)
and safe to share across threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, ParseError

if TYPE_CHECKING:  # pragma: no cover
    from .mapping import ClusterClassMapping

FILTERMAP_MAGIC = b"GGFM"
AFFINITY_MAGIC = b"GGAM"
FORMAT_VERSION = 1

ROW_SUM_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetManifest:
    """Ordered instance ids plus the unlabeled/development split and layer list."""

    instance_ids: tuple[str, ...]
    n_unlabeled: int
    m_dev: int
    layer_names: tuple[str, ...]
    notes: str = ""
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "instance_ids", tuple(self.instance_ids))
        object.__setattr__(self, "layer_names", tuple(self.layer_names))
        n_total = self.n_unlabeled + self.m_dev
        if self.n_unlabeled < 0 or self.m_dev < 0 or n_total != len(self.instance_ids):
            raise ConfigError(
                f"manifest counts inconsistent: n={self.n_unlabeled} m={self.m_dev} "
                f"ids={len(self.instance_ids)}"
            )
        if len(set(self.instance_ids)) != len(self.instance_ids):
            raise ConfigError("manifest instance ids must be unique")
        if not self.layer_names or len(set(self.layer_names)) != len(self.layer_names):
            raise ConfigError("manifest layer names must be non-empty and unique")
        for s in self.instance_ids:
            if not s or s.startswith("#") or any(c in s for c in "\t\n\r,"):
                raise ConfigError(f"instance id {s!r} not usable in text formats")
        for s in self.layer_names:
            if not s or s.startswith("#") or any(c in s for c in "\t\n\r,"):
                raise ConfigError(f"layer name {s!r} not usable in text formats")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.instance_ids)})

    @property
    def n_total(self) -> int:
        return self.n_unlabeled + self.m_dev

    def row_of(self, instance_id: str) -> int:
        try:
            return self._index[instance_id]
        except KeyError:
            raise ConfigError(f"unknown instance id {instance_id!r}") from None

    @property
    def dev_ids(self) -> tuple[str, ...]:
        return self.instance_ids[self.n_unlabeled:]


@dataclass(frozen=True, eq=False)
class FilterMap:
    """One image's activations at one network layer, a C x H x W tensor."""

    instance_id: str
    layer: str
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        object.__setattr__(self, "data", _readonly(arr))
        self.validate()

    def validate(self):
        if self.data.ndim != 3:
            raise ConfigError(f"filter map must be 3-D (C,H,W), got shape {self.data.shape}")
        if min(self.data.shape) < 1:
            raise ConfigError(f"filter map dims must be positive, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ConfigError("filter map contains non-finite values")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class DevSet:
    """Small balanced labeled sample used only for cluster-to-class identity."""

    entries: tuple[tuple[str, int], ...]
    n_classes: int

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((str(s), int(k)) for s, k in self.entries))
        if self.n_classes < 1:
            raise ConfigError(f"n_classes must be >= 1, got {self.n_classes}")
        if not self.entries:
            raise ConfigError("dev set is empty")
        ids = [s for s, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ConfigError("dev set lists an instance more than once")
        counts = np.zeros(self.n_classes, dtype=int)
        for _, k in self.entries:
            if not 0 <= k < self.n_classes:
                raise ConfigError(f"dev-set class index {k} out of range [0, {self.n_classes})")
            counts[k] += 1
        if counts.min() != counts.max() or counts.min() == 0:
            raise ConfigError(f"unbalanced dev set: per-class counts {counts.tolist()}")

    @property
    def per_class_count(self) -> int:
        return len(self.entries) // self.n_classes

    @property
    def size(self) -> int:
        return len(self.entries)

    def ids(self) -> tuple[str, ...]:
        return tuple(s for s, _ in self.entries)

    def row_indices(self, manifest: DatasetManifest) -> np.ndarray:
        return np.array([manifest.row_of(s) for s, _ in self.entries], dtype=np.intp)

    def rows_by_class(self, manifest: DatasetManifest) -> list[np.ndarray]:
        """Row indices grouped by class, index k' -> rows labeled k'."""
        groups: list[list[int]] = [[] for _ in range(self.n_classes)]
        for s, k in self.entries:
            groups[k].append(manifest.row_of(s))
        return [np.array(g, dtype=np.intp) for g in groups]


@dataclass(frozen=True)
class AffinityFunctionDescriptor:
    """Identity of one affinity function: a layer plus a 1-based prototype rank."""

    layer: str
    z: int

    def __post_init__(self):
        if self.z < 1:
            raise ConfigError(f"prototype rank must be >= 1, got {self.z}")


@dataclass(frozen=True, eq=False)
class AffinityMatrix:
    """N x (alpha*N) affinity scores.

    Column j belongs to function ``j // N`` and anchor instance ``j % N``.
    Scores are stored as float32, matching the on-disk representation.
    """

    scores: np.ndarray
    function_descriptors: tuple[AffinityFunctionDescriptor, ...]
    manifest: DatasetManifest

    def __post_init__(self):
        object.__setattr__(self, "function_descriptors", tuple(self.function_descriptors))
        arr = np.ascontiguousarray(self.scores, dtype=np.float32)
        object.__setattr__(self, "scores", _readonly(arr))
        n = self.manifest.n_total
        alpha = len(self.function_descriptors)
        if len(set(self.function_descriptors)) != alpha:
            raise ConfigError("affinity function descriptors must be unique")
        if self.scores.shape != (n, alpha * n):
            raise ConfigError(
                f"affinity matrix shape {self.scores.shape} does not match "
                f"N={n}, alpha={alpha}"
            )
        if not np.all(np.isfinite(self.scores)):
            raise ConfigError("affinity matrix contains non-finite scores")
        if self.scores.size and (self.scores.min() < -1.0 or self.scores.max() > 1.0):
            raise ConfigError("affinity scores must lie in [-1, 1]")

    @property
    def n_instances(self) -> int:
        return self.manifest.n_total

    @property
    def n_functions(self) -> int:
        return len(self.function_descriptors)

    def owner_of_column(self, j: int) -> tuple[int, int]:
        """(function index, anchor instance index) owning column j."""
        n = self.n_instances
        if not 0 <= j < self.n_functions * n:
            raise IndexError(f"column {j} out of range")
        return j // n, j % n

    def slice_of(self, f: int) -> np.ndarray:
        """The N x N block produced by function f."""
        n = self.n_instances
        return self.scores[:, f * n:(f + 1) * n]


@dataclass(frozen=True, eq=False)
class FinalLabels:
    """Per-instance probabilistic labels after cluster-to-class mapping."""

    probs: np.ndarray
    mapping: "ClusterClassMapping"
    hard: np.ndarray = None

    def __post_init__(self):
        probs = np.ascontiguousarray(self.probs, dtype=np.float64)
        if probs.ndim != 2:
            raise ConfigError("label probabilities must be a 2-D matrix")
        if not np.all(np.isfinite(probs)) or probs.min() < 0.0 or probs.max() > 1.0:
            raise ConfigError("label probabilities must be finite and within [0, 1]")
        if np.abs(probs.sum(axis=1) - 1.0).max() > ROW_SUM_TOL:
            raise ConfigError("label probability rows must sum to 1")
        object.__setattr__(self, "probs", _readonly(probs))
        object.__setattr__(self, "hard", _readonly(np.argmax(probs, axis=1)))

    @property
    def n_classes(self) -> int:
        return self.probs.shape[1]


# ---------------------------------------------------------------------------
# Binary reader/writer helpers
# ---------------------------------------------------------------------------

class _ByteReader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.path = path
        self.pos = 0

    def fail(self, message: str):
        raise ParseError(message, path=self.path, offset=self.pos)

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            self.fail(f"truncated {what}: need {n} bytes, have {len(self.data) - self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def string(self, what: str) -> str:
        n = self.u16(f"{what} length")
        raw = self.take(n, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            self.fail(f"{what} is not valid UTF-8")

    def f32_array(self, count: int, what: str) -> np.ndarray:
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4", count=count)

    def expect_end(self):
        if self.pos != len(self.data):
            self.fail(f"trailing bytes: {len(self.data) - self.pos} after payload")


def _pack_string(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ConfigError(f"string too long for format ({len(raw)} bytes)")
    return struct.pack("<H", len(raw)) + raw


def _check_magic(r: _ByteReader, magic: bytes, kind: str):
    got = r.take(len(magic), f"{kind} magic")
    if got != magic:
        r.pos = 0
        r.fail(f"malformed header: bad magic {got!r}, expected {magic!r}")
    version = r.u16(f"{kind} version")
    if version != FORMAT_VERSION:
        r.pos -= 2
        r.fail(f"unsupported {kind} version {version}")


# ---------------------------------------------------------------------------
# Filter-map files
# ---------------------------------------------------------------------------

def write_filtermap(fmap: FilterMap, path) -> None:
    """Write a filter map in the "GGFM" binary format. Deterministic bytes."""
    fmap.validate()
    header = (
        FILTERMAP_MAGIC
        + struct.pack("<H", FORMAT_VERSION)
        + _pack_string(fmap.instance_id)
        + _pack_string(fmap.layer)
        + struct.pack("<III", fmap.channels, fmap.height, fmap.width)
    )
    payload = np.ascontiguousarray(fmap.data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_filtermap(path) -> FilterMap:
    """Read a "GGFM" file. Raises ParseError naming the failing byte offset."""
    r = _ByteReader(Path(path).read_bytes(), path)
    _check_magic(r, FILTERMAP_MAGIC, "filter-map")
    instance_id = r.string("instance_id")
    layer = r.string("layer")
    c = r.u32("channel count")
    h = r.u32("height")
    w = r.u32("width")
    if min(c, h, w) < 1:
        r.fail(f"dimensions must be positive, got C={c} H={h} W={w}")
    values = r.f32_array(c * h * w, "payload")
    r.expect_end()
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        r.pos = len(r.data) - 4 * (c * h * w - bad)
        r.fail(f"non-finite value at element {bad}")
    return FilterMap(instance_id=instance_id, layer=layer, data=values.reshape(c, h, w))


# ---------------------------------------------------------------------------
# Affinity files
# ---------------------------------------------------------------------------

def save_affinity(matrix: AffinityMatrix, path) -> None:
    """Write an affinity matrix in the "GGAM" binary format."""
    n = matrix.n_instances
    alpha = matrix.n_functions
    parts = [
        AFFINITY_MAGIC,
        struct.pack("<H", FORMAT_VERSION),
        struct.pack("<II", n, alpha),
    ]
    for d in matrix.function_descriptors:
        parts.append(_pack_string(d.layer))
        parts.append(struct.pack("<I", d.z))
    parts.append(np.ascontiguousarray(matrix.scores, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_affinity(path, manifest: DatasetManifest) -> AffinityMatrix:
    """Read a "GGAM" file and bind it to a manifest (which carries the ids)."""
    r = _ByteReader(Path(path).read_bytes(), path)
    _check_magic(r, AFFINITY_MAGIC, "affinity")
    n = r.u32("instance count")
    alpha = r.u32("function count")
    if n < 1 or alpha < 1:
        r.fail(f"counts must be positive, got N={n} alpha={alpha}")
    descriptors = []
    for i in range(alpha):
        layer = r.string(f"descriptor {i} layer")
        z = r.u32(f"descriptor {i} rank")
        descriptors.append(AffinityFunctionDescriptor(layer=layer, z=z))
    scores = r.f32_array(n * alpha * n, "score payload")
    r.expect_end()
    if not np.all(np.isfinite(scores)):
        r.fail("score payload contains non-finite values")
    if n != manifest.n_total:
        raise ConfigError(
            f"affinity file has N={n} but manifest lists {manifest.n_total} instances"
        )
    return AffinityMatrix(
        scores=scores.reshape(n, alpha * n),
        function_descriptors=tuple(descriptors),
        manifest=manifest,
    )


# ---------------------------------------------------------------------------
# Text files: manifest, dev set, truth labels
# ---------------------------------------------------------------------------

def _content_lines(path) -> list[tuple[int, str]]:
    out = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            out.append((lineno, line.rstrip("\n")))
    return out


def write_manifest(manifest: DatasetManifest, path) -> None:
    lines = ["# afflabel manifest"]
    lines.append("version\t1")
    lines.append(f"n\t{manifest.n_unlabeled}")
    lines.append(f"m\t{manifest.m_dev}")
    lines.append("layers\t" + ",".join(manifest.layer_names))
    if manifest.notes:
        lines.append(f"notes\t{manifest.notes}")
    lines.extend(f"id\t{s}" for s in manifest.instance_ids)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> DatasetManifest:
    header: dict[str, str] = {}
    ids: list[str] = []
    for lineno, line in _content_lines(path):
        key, sep, value = line.partition("\t")
        if not sep:
            raise ParseError(f"line {lineno}: expected key<TAB>value", path=path)
        if key == "id":
            ids.append(value)
        elif key in ("version", "n", "m", "layers", "notes"):
            header[key] = value
        else:
            raise ParseError(f"line {lineno}: unknown manifest key {key!r}", path=path)
    for required in ("version", "n", "m", "layers"):
        if required not in header:
            raise ParseError(f"manifest missing required key {required!r}", path=path)
    if header["version"] != "1":
        raise ParseError(f"unsupported manifest version {header['version']!r}", path=path)
    try:
        n, m = int(header["n"]), int(header["m"])
    except ValueError:
        raise ParseError("manifest n/m must be integers", path=path) from None
    layers = tuple(s for s in header["layers"].split(",") if s)
    try:
        return DatasetManifest(
            instance_ids=tuple(ids),
            n_unlabeled=n,
            m_dev=m,
            layer_names=layers,
            notes=header.get("notes", ""),
        )
    except ConfigError as e:
        raise ParseError(str(e), path=path) from None


def _read_label_rows(path, n_classes: int) -> list[tuple[int, str, int]]:
    rows = []
    for lineno, line in _content_lines(path):
        instance_id, sep, rest = line.partition("\t")
        if not sep or not instance_id:
            raise ParseError(f"line {lineno}: expected instance_id<TAB>class_index", path=path)
        try:
            k = int(rest.strip())
        except ValueError:
            raise ParseError(f"line {lineno}: class index {rest!r} is not an integer",
                             path=path) from None
        if not 0 <= k < n_classes:
            raise ParseError(f"line {lineno}: class index {k} out of range [0, {n_classes})",
                             path=path)
        rows.append((lineno, instance_id, k))
    if not rows:
        raise ParseError("no label rows found", path=path)
    return rows


def read_devset(path, manifest: DatasetManifest, n_classes: int) -> DevSet:
    """Read a dev-set file and validate it against the manifest.

    The dev set must be class-balanced and must consist of exactly the
    manifest's development instances (the last ``m_dev`` ids).
    """
    rows = _read_label_rows(path, n_classes)
    for lineno, instance_id, _ in rows:
        if instance_id not in manifest.instance_ids:
            raise ParseError(f"line {lineno}: dev-set instance {instance_id!r} not in manifest",
                             path=path)
    try:
        dev = DevSet(entries=tuple((s, k) for _, s, k in rows), n_classes=n_classes)
    except ConfigError as e:
        raise ParseError(str(e), path=path) from None
    if set(dev.ids()) != set(manifest.dev_ids):
        raise ParseError(
            "dev set must consist of the manifest's development instances "
            f"(the last {manifest.m_dev} ids)", path=path)
    return dev


def write_devset(dev: DevSet, path) -> None:
    lines = [f"{s}\t{k}" for s, k in dev.entries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_truth(path, n_classes: int) -> dict[str, int]:
    """Read ground-truth labels (same row format as a dev set, no balance rule)."""
    rows = _read_label_rows(path, n_classes)
    out: dict[str, int] = {}
    for lineno, instance_id, k in rows:
        if instance_id in out:
            raise ParseError(f"line {lineno}: duplicate truth row for {instance_id!r}", path=path)
        out[instance_id] = k
    return out


def write_truth(labels: Mapping[str, int], order: Iterable[str], path) -> None:
    lines = [f"{s}\t{labels[s]}" for s in order]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def filtermap_filename(instance_id: str, layer: str) -> str:
    """Canonical file name for one (instance, layer) filter map."""
    return f"{instance_id}__{layer}.ggfm"


def load_filtermaps(directory, manifest: DatasetManifest,
                    layers: Sequence[str] | None = None) -> dict[tuple[str, str], FilterMap]:
    """Load every (instance, layer) map named by the manifest from a directory."""
    directory = Path(directory)
    layers = tuple(layers) if layers is not None else manifest.layer_names
    out: dict[tuple[str, str], FilterMap] = {}
    for instance_id in manifest.instance_ids:
        for layer in layers:
            p = directory / filtermap_filename(instance_id, layer)
            if not p.exists():
                raise ConfigError(f"missing filter map for ({instance_id!r}, {layer!r}): {p}")
            fmap = read_filtermap(p)
            if fmap.instance_id != instance_id or fmap.layer != layer:
                raise ParseError(
                    f"file {p} declares ({fmap.instance_id!r}, {fmap.layer!r}), "
                    f"expected ({instance_id!r}, {layer!r})", path=p)
            out[(instance_id, layer)] = fmap
    return out
