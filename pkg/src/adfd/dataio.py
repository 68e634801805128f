"""Protocol files, feature caches, checkpoints, and embedding tables.

Binary formats (all little-endian, magic-prefixed, versioned):

feature cache 'ADFC', version 1
    magic 4s | version u16 | config_hash u64 | dims 3 x u32 (64, 64, 3)
    records: id_len u16 | id bytes | seg_index u32 | dims.prod() x f32

checkpoint 'ADCK', version 1
    magic 4s | version u16 | arch_len u16 | arch bytes | seed u64
    | dev_eer f64 | n_params u32
    params: name_len u16 | name bytes | rank u8 | rank x u32 dims | f32 data

Truncated files raise instead of returning partial data.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ArchMismatchError,
    BadMagicError,
    ConfigHashMismatchError,
    MalformedLineError,
    NonNumericFieldError,
    RaggedRowsError,
    ShapeMismatchError,
    TruncatedFileError,
    UnknownKeyError,
    UnsupportedDimError,
    VersionUnsupportedError,
)
from .training import EmbeddingRecord, ModelCheckpoint

CACHE_MAGIC = b"ADFC"
CKPT_MAGIC = b"ADCK"
FORMAT_VERSION = 1
TENSOR_DIMS = (64, 64, 3)
EMBEDDING_DIMS = (192, 512, 1024)

KEY_LABELS = {"bonafide": 0, "spoof": 1}
SUBSETS = ("train", "dev", "eval")


# --------------------------------------------------------------------------
# Protocol files
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrialEntry:
    """One line of an ASVspoof-style trial protocol."""

    speaker_id: str
    utt_id: str
    system_id: str  # '-' for bonafide trials
    key: str        # 'bonafide' or 'spoof'
    subset: str

    @property
    def label(self) -> int:
        return KEY_LABELS[self.key]


def parse_protocol(path: str | Path, subset: str) -> list[TrialEntry]:
    """Parse a 5-column protocol: speaker, utt_id, unused, system, key.

    Empty lines are skipped. Raises MalformedLineError (with the line
    number) on a wrong field count or duplicate utterance id, and
    UnknownKeyError on a key other than bonafide/spoof.
    """
    if subset not in SUBSETS:
        raise MalformedLineError(f"unknown subset {subset!r}, expected one of {SUBSETS}")
    entries = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 5:
                raise MalformedLineError(
                    f"{path}:{line_no}: expected 5 fields, got {len(fields)}", line_no)
            speaker, utt_id, _, system_id, key = fields
            if key not in KEY_LABELS:
                raise UnknownKeyError(f"{path}:{line_no}: unknown key {key!r}")
            if utt_id in seen:
                raise MalformedLineError(
                    f"{path}:{line_no}: duplicate utterance id {utt_id!r}", line_no)
            seen.add(utt_id)
            entries.append(TrialEntry(speaker, utt_id, system_id, key, subset))
    return entries


def key_counts(entries) -> dict[str, int]:
    counts = {"bonafide": 0, "spoof": 0}
    for e in entries:
        counts[e.key] += 1
    return counts


def keys_by_utt(entries) -> dict[str, int]:
    return {e.utt_id: e.label for e in entries}


# --------------------------------------------------------------------------
# Binary helpers
# --------------------------------------------------------------------------

class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(
                f"{self.path}: needed {n} bytes at offset {self.pos}, "
                f"file has {len(self.data)}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def at_end(self) -> bool:
        return self.pos == len(self.data)


def _check_header(reader: _Reader, magic: bytes):
    got = reader.take(4)
    if got != magic:
        raise BadMagicError(f"{reader.path}: magic {got!r}, expected {magic!r}")
    (version,) = reader.unpack("<H")
    if version != FORMAT_VERSION:
        raise VersionUnsupportedError(
            f"{reader.path}: format version {version}, reader supports {FORMAT_VERSION}")


# --------------------------------------------------------------------------
# Feature cache
# --------------------------------------------------------------------------

@dataclass
class FeatureCache:
    config_hash: int
    dims: tuple[int, int, int]
    records: list[tuple[str, int, np.ndarray]]  # (utt_id, seg_index, float32 tensor)


def write_feature_cache(path: str | Path, records, config_hash: int,
                        dims: tuple[int, int, int] = TENSOR_DIMS) -> int:
    """Stream (utt_id, seg_index, tensor) records to disk in input order.
    Returns the number of records written."""
    count = 0
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<HQ3I", FORMAT_VERSION, config_hash & 0xFFFFFFFFFFFFFFFF, *dims))
        for utt_id, seg_index, tensor in records:
            arr = np.ascontiguousarray(tensor, dtype="<f4")
            if arr.shape != tuple(dims):
                raise ShapeMismatchError(
                    f"record {utt_id!r}#{seg_index}: shape {arr.shape} != {tuple(dims)}")
            if not np.isfinite(arr).all():
                raise ShapeMismatchError(f"record {utt_id!r}#{seg_index}: non-finite values")
            encoded = utt_id.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", seg_index))
            fh.write(arr.tobytes())
            count += 1
    return count


def read_feature_cache(path: str | Path, expected_hash: int | None = None) -> FeatureCache:
    """Read a feature cache; record order is preserved from writing.

    expected_hash, when given, pins the feature configuration that
    produced the cache.
    """
    reader = _Reader(Path(path).read_bytes(), path)
    _check_header(reader, CACHE_MAGIC)
    config_hash, d0, d1, d2 = reader.unpack("<Q3I")
    if expected_hash is not None and config_hash != expected_hash & 0xFFFFFFFFFFFFFFFF:
        raise ConfigHashMismatchError(
            f"{path}: cache built under config hash {config_hash:#018x}, "
            f"expected {expected_hash & 0xFFFFFFFFFFFFFFFF:#018x}")
    dims = (d0, d1, d2)
    payload = int(np.prod(dims))
    records = []
    while not reader.at_end():
        (id_len,) = reader.unpack("<H")
        utt_id = reader.take(id_len).decode("utf-8")
        (seg_index,) = reader.unpack("<I")
        raw = reader.take(payload * 4)
        tensor = np.frombuffer(raw, dtype="<f4").reshape(dims)
        records.append((utt_id, seg_index, tensor))
    return FeatureCache(config_hash=config_hash, dims=dims, records=records)


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------

def save_checkpoint(path: str | Path, ckpt: ModelCheckpoint) -> None:
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        arch = ckpt.arch_id.encode("utf-8")
        fh.write(struct.pack("<H", FORMAT_VERSION))
        fh.write(struct.pack("<H", len(arch)))
        fh.write(arch)
        fh.write(struct.pack("<QdI", ckpt.seed & 0xFFFFFFFFFFFFFFFF,
                             float(ckpt.dev_eer), len(ckpt.params)))
        for name, arr in ckpt.params:
            arr = np.ascontiguousarray(arr, dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path: str | Path) -> ModelCheckpoint:
    """Load and validate a checkpoint.

    The parameter list must exactly match (names, order, shapes) what the
    declared architecture requires, otherwise ArchMismatchError is
    raised. The stored epoch is not part of the format; it loads as 0.
    """
    from .nnet import init_model

    reader = _Reader(Path(path).read_bytes(), path)
    _check_header(reader, CKPT_MAGIC)
    (arch_len,) = reader.unpack("<H")
    arch_id = reader.take(arch_len).decode("utf-8")
    seed, dev_eer, n_params = reader.unpack("<QdI")

    params = []
    for _ in range(n_params):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<B")
        shape = reader.unpack(f"<{rank}I")
        data = reader.take(int(np.prod(shape)) * 4)
        params.append((name, np.frombuffer(data, dtype="<f4").reshape(shape)))
    if not reader.at_end():
        raise ArchMismatchError(
            f"{path}: {len(reader.data) - reader.pos} unexpected trailing bytes "
            f"after {n_params} parameters")

    reference = init_model(arch_id, seed)  # raises UnknownArchError for bad ids
    expected = reference.params()
    if len(params) != len(expected):
        raise ArchMismatchError(
            f"{path}: {arch_id} requires {len(expected)} parameter tensors, "
            f"file declares {len(params)}")
    for (want_name, want_arr), (got_name, got_arr) in zip(expected, params):
        if want_name != got_name or want_arr.shape != got_arr.shape:
            raise ArchMismatchError(
                f"{path}: parameter {got_name} {got_arr.shape} does not match "
                f"{want_name} {want_arr.shape}")
    return ModelCheckpoint(arch_id=arch_id, seed=seed, params=params,
                           dev_eer=dev_eer, epoch=0)


# --------------------------------------------------------------------------
# Embedding tables
# --------------------------------------------------------------------------

def read_embeddings(path: str | Path) -> list[EmbeddingRecord]:
    """Read a TSV of utt_id followed by D float values per line.

    All rows must share the same D, and D must be one of 192/512/1024.
    The file stem becomes each record's source tag.
    """
    path = Path(path)
    records = []
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) < 2:
                raise RaggedRowsError(f"{path}:{line_no}: expected utt_id plus values")
            utt_id, values = fields[0], fields[1:]
            if dim is None:
                dim = len(values)
                if dim not in EMBEDDING_DIMS:
                    raise UnsupportedDimError(
                        f"{path}: embedding dim {dim}, supported: {EMBEDDING_DIMS}")
            elif len(values) != dim:
                raise RaggedRowsError(
                    f"{path}:{line_no}: row has {len(values)} values, expected {dim}")
            try:
                vector = np.array([float(v) for v in values], dtype=np.float32)
            except ValueError as exc:
                raise NonNumericFieldError(f"{path}:{line_no}: {exc}") from None
            if not np.isfinite(vector).all():
                raise NonNumericFieldError(f"{path}:{line_no}: non-finite value")
            records.append(EmbeddingRecord(utt_id=utt_id, vector=vector, source_tag=path.stem))
    return records
