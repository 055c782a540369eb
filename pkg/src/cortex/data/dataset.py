"""In-memory datasets, directory ingestion and the ``CFDS`` container.

File layout (all integers little-endian)::

    b"CFDS"  u16 version
    u8 class count, then per class: u8 id, u8 name length, UTF-8 name
    u16 channels  u16 height  u16 width
    u32 example count
    count x record: u8 label, channels*height*width float32 pixels
    count x source id: u16 length, UTF-8 bytes
    u64 checksum (BLAKE2b, 8-byte digest, of every preceding byte)
"""

from __future__ import annotations

import hashlib
import logging
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .._threads import worker_count
from ..errors import DatasetFormatError, IngestionError, ValidationError
from .images import IMAGE_SIZE, load_image_tensor

log = logging.getLogger(__name__)

MAGIC = b"CFDS"
VERSION = 1
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")

DEFAULT_LABEL_MAP: dict[str, int] = {"healthy": 0, "glioma": 1, "meningioma": 2, "pituitary": 3}


def validate_label_map(label_map: Mapping[str, int]) -> dict[str, int]:
    ids = sorted(label_map.values())
    if ids != list(range(len(ids))) or not ids:
        raise ValidationError(f"label ids must be contiguous from 0, got {ids}")
    if len(set(label_map)) != len(label_map):
        raise ValidationError("label names must be unique")
    return dict(sorted(label_map.items(), key=lambda kv: kv[1]))


def class_names(label_map: Mapping[str, int]) -> list[str]:
    return [name for name, _ in sorted(label_map.items(), key=lambda kv: kv[1])]


def checksum(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


@dataclass
class Dataset:
    images: np.ndarray  # float32 [n, C, H, W]
    labels: np.ndarray  # uint8 [n]
    label_map: dict = field(default_factory=lambda: dict(DEFAULT_LABEL_MAP))
    source_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        self.label_map = validate_label_map(self.label_map)
        if not self.source_ids:
            self.source_ids = [f"#{i}" for i in range(len(self.labels))]
        self.source_ids = list(self.source_ids)
        if self.images.ndim != 4:
            raise ValidationError(f"images must be [n, C, H, W], got {self.images.shape}")
        if not len(self.images) == len(self.labels) == len(self.source_ids):
            raise ValidationError("images, labels and source ids differ in length")

    def __len__(self):
        return len(self.labels)

    @property
    def image_shape(self) -> tuple:
        return tuple(self.images.shape[1:])

    @property
    def class_names(self) -> list[str]:
        return class_names(self.label_map)

    def class_counts(self) -> dict[str, int]:
        counts = np.bincount(self.labels, minlength=len(self.label_map))
        return {name: int(counts[i]) for i, name in enumerate(self.class_names)}

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(
            self.images[idx], self.labels[idx], self.label_map, [self.source_ids[i] for i in idx]
        )

    def validate(self):
        if len(self.labels) and self.labels.max() >= len(self.label_map):
            raise ValidationError("label outside the label map")
        if self.images.size and (not np.isfinite(self.images).all() or self.images.min() < 0 or self.images.max() > 1):
            raise ValidationError("pixel values must lie in [0, 1]")

    def to_bytes(self) -> bytes:
        self.validate()
        n, c, h, w = self.images.shape if len(self) else (0,) + self.image_shape
        parts = [MAGIC, struct.pack("<H", VERSION), struct.pack("<B", len(self.label_map))]
        for name, idx in self.label_map.items():
            raw = name.encode("utf-8")
            parts.append(struct.pack("<BB", idx, len(raw)) + raw)
        parts.append(struct.pack("<HHHI", c, h, w, n))
        record = np.dtype([("label", "u1"), ("pixels", "<f4", (c * h * w,))])
        rec = np.empty(n, dtype=record)
        rec["label"] = self.labels
        rec["pixels"] = self.images.reshape(n, -1)
        parts.append(rec.tobytes())
        for sid in self.source_ids:
            raw = sid.encode("utf-8")
            parts.append(struct.pack("<H", len(raw)) + raw)
        body = b"".join(parts)
        return body + struct.pack("<Q", checksum(body))

    def save(self, path):
        write_atomic(path, self.to_bytes())

    @property
    def checksum(self) -> str:
        return f"{struct.unpack('<Q', self.to_bytes()[-8:])[0]:016x}"


def write_atomic(path, payload: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".part")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise DatasetFormatError("dataset file is truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def dataset_from_bytes(buf: bytes) -> Dataset:
    if len(buf) < 14 or buf[:4] != MAGIC:
        raise DatasetFormatError("not a CFDS dataset file (bad magic)")
    body, tail = buf[:-8], buf[-8:]
    r = _Reader(body)
    r.take(4)
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise DatasetFormatError(f"unsupported dataset version {version}")
    if struct.unpack("<Q", tail)[0] != checksum(body):
        raise DatasetFormatError("dataset checksum mismatch")
    (n_classes,) = r.unpack("<B")
    label_map = {}
    for _ in range(n_classes):
        idx, length = r.unpack("<BB")
        label_map[r.take(length).decode("utf-8")] = idx
    c, h, w, n = r.unpack("<HHHI")
    record = np.dtype([("label", "u1"), ("pixels", "<f4", (c * h * w,))])
    raw = r.take(record.itemsize * n)
    rec = np.frombuffer(raw, dtype=record, count=n)
    source_ids = []
    for _ in range(n):
        (length,) = r.unpack("<H")
        source_ids.append(r.take(length).decode("utf-8"))
    if r.pos != len(body):
        raise DatasetFormatError("declared example count does not match payload size")
    try:
        ds = Dataset(
            rec["pixels"].reshape(n, c, h, w).astype(np.float32),
            rec["label"].copy(),
            validate_label_map(label_map),
            source_ids,
        )
        ds.validate()
    except ValidationError as exc:
        raise DatasetFormatError(f"invalid dataset contents: {exc}") from exc
    return ds


def load_dataset(path) -> Dataset:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise DatasetFormatError(f"cannot read dataset {path}: {exc.strerror}") from exc
    return dataset_from_bytes(buf)


def save_dataset(dataset: Dataset, path):
    dataset.save(path)


@dataclass
class BuildSummary:
    counts: dict
    skipped: list  # (path, reason)
    total: int
    checksum: str
    empty_classes: list = field(default_factory=list)


def _class_files(root: Path, label_map) -> list[tuple[int, Path]]:
    if not root.is_dir():
        raise ValidationError(f"input directory does not exist: {root}")
    if not any(p.is_dir() for p in root.iterdir()):
        raise ValidationError(f"no class directories under {root}")
    jobs = []
    for name, idx in label_map.items():
        folder = root / name
        if not folder.is_dir():
            raise ValidationError(f"missing class directory: {folder}")
        files = sorted(p for p in folder.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        jobs.extend((idx, p) for p in files)
    return jobs


def build_dataset(root_dir, output, label_map: Mapping[str, int] | None = None, size: int = IMAGE_SIZE) -> BuildSummary:
    """Ingest ``root/<class>/*.png|jpg`` into a dataset file at ``output``.

    Unreadable images are skipped and reported, never fatal.
    """
    label_map = validate_label_map(label_map or DEFAULT_LABEL_MAP)
    root = Path(root_dir)
    jobs = _class_files(root, label_map)

    def load(job):
        idx, path = job
        try:
            return idx, path, load_image_tensor(path, size).array
        except IngestionError as exc:
            return idx, path, exc

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(load, jobs))
    else:
        results = [load(j) for j in jobs]

    images, labels, sources, skipped = [], [], [], []
    for idx, path, res in results:
        if isinstance(res, IngestionError):
            log.warning("skipping %s", res)
            skipped.append((str(path.relative_to(root)), res.reason))
            continue
        images.append(res)
        labels.append(idx)
        sources.append(path.relative_to(root).as_posix())

    arr = np.stack(images) if images else np.zeros((0, 3, size, size), np.float32)
    ds = Dataset(arr, np.array(labels, dtype=np.uint8), label_map, sources)
    payload = ds.to_bytes()
    write_atomic(output, payload)
    counts = ds.class_counts()
    return BuildSummary(
        counts=counts,
        skipped=skipped,
        total=len(ds),
        checksum=f"{struct.unpack('<Q', payload[-8:])[0]:016x}",
        empty_classes=[c for c, k in counts.items() if k == 0],
    )


def split_indices(n: int, train_fraction: float = 0.8, seed: int = 0, labels: Sequence[int] | None = None, stratify=False):
    """Seeded shuffle, then the first ``floor(fraction * n)`` positions train."""
    if n <= 0:
        raise ValidationError("cannot split an empty dataset")
    if not 0.0 < train_fraction <= 1.0:
        raise ValidationError(f"train fraction must be in (0, 1], got {train_fraction}")
    rng = np.random.default_rng(seed)
    if not stratify:
        order = rng.permutation(n)
        cut = int(np.floor(train_fraction * n))
        return order[:cut], order[cut:]
    if labels is None:
        raise ValidationError("stratified split needs labels")
    labels = np.asarray(labels)
    train, test = [], []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(len(members))]
        cut = int(np.floor(train_fraction * len(members)))
        train.append(members[:cut])
        test.append(members[cut:])
    return np.concatenate(train), np.concatenate(test)


def split_dataset(dataset, train_fraction: float = 0.8, seed: int = 0, stratify: bool = False):
    """Split a :class:`Dataset` (or any indexable sequence) into train and test parts."""
    labels = dataset.labels if isinstance(dataset, Dataset) else None
    tr, te = split_indices(len(dataset), train_fraction, seed, labels, stratify)
    if isinstance(dataset, Dataset):
        return dataset.subset(tr), dataset.subset(te)
    return [dataset[i] for i in tr], [dataset[i] for i in te]


def membership_hash(dataset: Dataset) -> str:
    h = hashlib.sha256()
    for sid in dataset.source_ids:
        h.update(sid.encode("utf-8") + b"\0")
    return h.hexdigest()[:16]
