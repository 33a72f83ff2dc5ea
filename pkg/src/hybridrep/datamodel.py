"""Core domain types, the binary feature-store format, and dataset manifests."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

STORE_MAGIC = b"HFRS"
STORE_VERSION = 1


class FeatureStoreError(Exception):
    """Raised on malformed or inconsistent feature-store files."""


class ManifestError(Exception):
    """Raised on invalid dataset manifests."""


@dataclass(frozen=True, order=True)
class Box:
    """Axis-aligned box, half-open [x1, x2) x [y1, y2), integer pixel coords."""

    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box {self}")
        if min(self.x1, self.y1) < 0:
            raise ValueError(f"negative coordinate in {self}")

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    @property
    def area(self) -> int:
        return self.width * self.height


@dataclass
class FeatureTensor:
    """d x h x w grid of f32 activations, channel-major."""

    data: np.ndarray  # shape (d, h, w), float32
    scale_id: int = 0

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise ValueError(f"tensor must be rank 3, got shape {self.data.shape}")
        if min(self.data.shape) < 1:
            raise ValueError(f"empty tensor dims {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("tensor contains non-finite values")

    @property
    def d(self) -> int:
        return self.data.shape[0]

    @property
    def h(self) -> int:
        return self.data.shape[1]

    @property
    def w(self) -> int:
        return self.data.shape[2]

    def vectors(self) -> np.ndarray:
        """All spatial positions as rows: shape (h*w, d), row-major over (i, j)."""
        return self.data.reshape(self.d, -1).T


@dataclass
class ImageRecord:
    id: str
    label: int
    pixels: np.ndarray | None = None  # (256, 256, 3) uint8
    image_path: str | None = None
    feature_ref: str | None = None
    domain: str | None = None
    proposals: list[Box] = field(default_factory=list)

    def __post_init__(self):
        if self.pixels is not None:
            self.pixels = np.asarray(self.pixels, dtype=np.uint8)
            if self.pixels.shape != (256, 256, 3):
                raise ManifestError(
                    f"record {self.id!r}: pixels must be 256x256x3, got {self.pixels.shape}"
                )


@dataclass
class DatasetManifest:
    classes: list[str]
    records: list[ImageRecord]
    splits: dict[str, tuple[list[str], list[str]]] = field(default_factory=dict)

    def __post_init__(self):
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise ManifestError(f"duplicate record id {dup!r}")
        known = set(ids)
        for rec in self.records:
            if not 0 <= rec.label < len(self.classes):
                raise ManifestError(
                    f"record {rec.id!r}: label {rec.label} out of range for "
                    f"{len(self.classes)} classes"
                )
        for name, (train, test) in self.splits.items():
            for rid in list(train) + list(test):
                if rid not in known:
                    raise ManifestError(f"split {name!r} references unknown id {rid!r}")
            overlap = set(train) & set(test)
            if overlap:
                raise ManifestError(
                    f"split {name!r}: ids in both train and test: {sorted(overlap)}"
                )

    def record(self, rid: str) -> ImageRecord:
        for rec in self.records:
            if rec.id == rid:
                return rec
        raise KeyError(rid)

    def by_domain(self) -> dict[str, list[ImageRecord]]:
        groups: dict[str, list[ImageRecord]] = {}
        for rec in self.records:
            groups.setdefault(rec.domain or "", []).append(rec)
        return groups


# canonical block order of the hybrid representation
BLOCK_ORDER = ("MLR", "CFV", "FCR1", "FCR2")


@dataclass
class HybridRepresentation:
    """Ordered, named concatenation of representation blocks."""

    blocks: list[tuple[str, np.ndarray]]

    def __post_init__(self):
        names = [n for n, _ in self.blocks]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate block names in {names}")

    @property
    def dim(self) -> int:
        return sum(v.shape[0] for _, v in self.blocks)

    def concat(self) -> np.ndarray:
        return np.concatenate([np.asarray(v, dtype=np.float32) for _, v in self.blocks])


def _validate_entry(eid: str, arr: np.ndarray):
    if arr.ndim not in (1, 2, 3):
        raise FeatureStoreError(f"entry {eid!r}: rank must be 1..3, got {arr.ndim}")
    if arr.size == 0:
        raise FeatureStoreError(f"entry {eid!r}: empty array")
    if not np.all(np.isfinite(arr)):
        raise FeatureStoreError(f"entry {eid!r}: non-finite values")


def write_feature_store(path, entries) -> None:
    """Write (id, array-or-FeatureTensor) pairs in the HFRS binary format.

    Little-endian: magic "HFRS", u32 version, u64 count; per entry u32 id length,
    UTF-8 id, u8 rank, rank x u32 dims (d[,h[,w]]), then f32 data channel-major.
    """
    seen: set[str] = set()
    blob = bytearray()
    n = 0
    for eid, value in entries:
        if eid in seen:
            raise FeatureStoreError(f"duplicate id {eid!r}")
        seen.add(eid)
        arr = value.data if isinstance(value, FeatureTensor) else np.asarray(value)
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        _validate_entry(eid, arr)
        raw_id = eid.encode("utf-8")
        blob += struct.pack("<I", len(raw_id)) + raw_id
        blob += struct.pack("<B", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.tobytes()
        n += 1
    with open(path, "wb") as fh:
        fh.write(STORE_MAGIC)
        fh.write(struct.pack("<IQ", STORE_VERSION, n))
        fh.write(bytes(blob))


def read_feature_store(path) -> list[tuple[str, np.ndarray | FeatureTensor]]:
    """Exact inverse of write_feature_store; rank-3 entries come back as FeatureTensor."""
    with open(path, "rb") as fh:
        buf = fh.read()

    def take(fmt: str, offset: int):
        size = struct.calcsize(fmt)
        if offset + size > len(buf):
            raise FeatureStoreError("truncated record")
        return struct.unpack_from(fmt, buf, offset), offset + size

    if buf[:4] != STORE_MAGIC:
        raise FeatureStoreError("bad magic")
    (version, count), pos = take("<IQ", 4)
    if version != STORE_VERSION:
        raise FeatureStoreError(f"unsupported version {version}")
    out: list[tuple[str, np.ndarray | FeatureTensor]] = []
    for _ in range(count):
        (id_len,), pos = take("<I", pos)
        if pos + id_len > len(buf):
            raise FeatureStoreError("truncated record")
        eid = buf[pos : pos + id_len].decode("utf-8")
        pos += id_len
        (rank,), pos = take("<B", pos)
        if rank not in (1, 2, 3):
            raise FeatureStoreError(f"entry {eid!r}: bad rank {rank}")
        dims, pos = take(f"<{rank}I", pos)
        n_vals = 1
        for dim in dims:
            if dim == 0 or dim > 2**31:
                raise FeatureStoreError(f"entry {eid!r}: dimension overflow {dims}")
            n_vals *= dim
        nbytes = 4 * n_vals
        if pos + nbytes > len(buf):
            raise FeatureStoreError("truncated record")
        arr = np.frombuffer(buf[pos : pos + nbytes], dtype="<f4").reshape(dims).copy()
        pos += nbytes
        out.append((eid, FeatureTensor(arr) if rank == 3 else arr))
    return out


def load_store_index(paths) -> dict[str, np.ndarray | FeatureTensor]:
    """Merge one or more feature stores into an in-memory id -> value index."""
    index: dict[str, np.ndarray | FeatureTensor] = {}
    for path in paths:
        for eid, value in read_feature_store(path):
            if eid in index:
                raise FeatureStoreError(f"duplicate id {eid!r} across stores")
            index[eid] = value
    return index


def load_manifest(path) -> DatasetManifest:
    """Parse and validate a JSON dataset manifest."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest parse error: {exc}") from exc
    for key in ("classes", "records"):
        if key not in doc:
            raise ManifestError(f"manifest missing {key!r}")
    records = []
    for raw in doc["records"]:
        try:
            boxes = [Box(*b) for b in raw.get("boxes", [])]
        except (TypeError, ValueError) as exc:
            raise ManifestError(f"record {raw.get('id')!r}: bad box: {exc}") from exc
        records.append(
            ImageRecord(
                id=raw["id"],
                label=raw["label"],
                image_path=raw.get("image_path"),
                feature_ref=raw.get("feature_ref"),
                domain=raw.get("domain"),
                proposals=boxes,
            )
        )
    splits = {
        name: (list(spec["train"]), list(spec["test"]))
        for name, spec in doc.get("splits", {}).items()
    }
    return DatasetManifest(classes=list(doc["classes"]), records=records, splits=splits)


def save_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "classes": manifest.classes,
        "records": [
            {
                "id": r.id,
                "label": r.label,
                **({"image_path": r.image_path} if r.image_path else {}),
                **({"feature_ref": r.feature_ref} if r.feature_ref else {}),
                **({"domain": r.domain} if r.domain else {}),
                **(
                    {"boxes": [[b.x1, b.y1, b.x2, b.y2] for b in r.proposals]}
                    if r.proposals
                    else {}
                ),
            }
            for r in manifest.records
        ],
        "splits": {
            name: {"train": train, "test": test}
            for name, (train, test) in manifest.splits.items()
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def resolve_pixels(record: ImageRecord, base_dir=".") -> np.ndarray:
    """Return the record's 256x256 RGB pixels, loading from disk if needed."""
    if record.pixels is not None:
        return record.pixels
    if record.image_path is None:
        raise ManifestError(f"record {record.id!r} has neither pixels nor image_path")
    from pathlib import Path

    from PIL import Image

    img = Image.open(Path(base_dir) / record.image_path).convert("RGB")
    if img.size != (256, 256):
        img = img.resize((256, 256), Image.BILINEAR)
    record.pixels = np.asarray(img, dtype=np.uint8)
    return record.pixels
