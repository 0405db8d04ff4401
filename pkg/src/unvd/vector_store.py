"""Namespaced, persistent, exact-kNN vector index using cosine distance.

Vectors are stored as 32-bit floats; all dot products and norms accumulate
in 64-bit. Search is an exhaustive scan, which is exact and fast at desk
scale. Persistence is a binary snapshot per namespace plus an append-only
log of upserts/deletes; ``compact()`` folds the log into the snapshot.
"""

from __future__ import annotations

import io
import json
import os
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import quote, unquote

import numpy as np

from .errors import (
    CorruptFile,
    DimensionMismatch,
    InvalidId,
    UnknownNamespace,
    ZeroNorm,
)

MAGIC = b"UNVD"
FORMAT_VERSION = 1

_FLAG_UPSERT = 0
_FLAG_DELETE = 1


def cosine_distance(u, v) -> float:
    """1 - cos(u, v), clamped to [0, 2]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatch(f"vector lengths differ: {u.shape[0]} vs {v.shape[0]}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroNorm("cosine distance undefined for zero-norm vector")
    d = 1.0 - float(np.dot(u, v)) / (nu * nv)
    return min(max(d, 0.0), 2.0)


@dataclass(frozen=True)
class VectorRecord:
    id: str
    vector: np.ndarray  # float32
    metadata: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class QueryResult:
    id: str
    distance: float
    metadata: dict[str, str]


@dataclass
class StoreManifest:
    dimension: int | None
    namespaces: list[tuple[str, int]]
    format_version: int = FORMAT_VERSION


class _Namespace:
    def __init__(self):
        self.records: dict[str, VectorRecord] = {}
        self._ids: list[str] | None = None
        self._matrix: np.ndarray | None = None  # float64, for accumulation
        self._norms: np.ndarray | None = None

    def invalidate(self):
        self._ids = None
        self._matrix = None
        self._norms = None

    def index(self):
        if self._ids is None:
            self._ids = list(self.records.keys())
            if self._ids:
                self._matrix = np.stack(
                    [self.records[i].vector for i in self._ids]
                ).astype(np.float64)
                self._norms = np.linalg.norm(self._matrix, axis=1)
            else:
                self._matrix = np.zeros((0, 0))
                self._norms = np.zeros(0)
        return self._ids, self._matrix, self._norms


class VectorStore:
    """Exact cosine-distance vector store with optional file-backed durability.

    When constructed with a directory, every upsert/delete is appended to a
    per-namespace log so the store survives process restarts; ``compact()``
    folds logs into snapshots.
    """

    def __init__(self, dimension: int | None = None, directory: str | Path | None = None):
        self._dim = dimension
        self._namespaces: dict[str, _Namespace] = {}
        self._lock = threading.RLock()
        self._dir = Path(directory) if directory is not None else None
        if self._dir is not None:
            self._dir.mkdir(parents=True, exist_ok=True)
            if (self._dir / "manifest.json").exists():
                self._load_dir(self._dir)

    # -- validation ------------------------------------------------------

    def _check_record(self, record: VectorRecord) -> np.ndarray:
        if not record.id:
            raise InvalidId("record id must be non-empty")
        vec = np.asarray(record.vector, dtype=np.float32)
        if vec.ndim != 1:
            raise DimensionMismatch("vector must be one-dimensional")
        if not np.all(np.isfinite(vec)):
            raise ValueError("vector contains NaN/Inf")
        if self._dim is None:
            self._dim = int(vec.shape[0])
        elif vec.shape[0] != self._dim:
            raise DimensionMismatch(
                f"vector length {vec.shape[0]} != store dimension {self._dim}"
            )
        if float(np.linalg.norm(vec.astype(np.float64))) == 0.0:
            raise ZeroNorm("all-zero vectors are not storable")
        return vec

    def _ns(self, namespace: str, create: bool = False) -> _Namespace:
        ns = self._namespaces.get(namespace)
        if ns is None:
            if not create:
                raise UnknownNamespace(namespace)
            ns = self._namespaces[namespace] = _Namespace()
        return ns

    # -- operations ------------------------------------------------------

    def upsert(self, namespace: str, record: VectorRecord) -> str:
        """Insert or replace by id. Returns 'created' or 'replaced'."""
        with self._lock:
            vec = self._check_record(record)
            ns = self._ns(namespace, create=True)
            existed = record.id in ns.records
            stored = VectorRecord(record.id, vec, dict(record.metadata))
            ns.records[record.id] = stored
            ns.invalidate()
            if self._dir is not None:
                self._append_log(namespace, _FLAG_UPSERT, stored)
            return "replaced" if existed else "created"

    def fetch(self, namespace: str, record_id: str) -> VectorRecord | None:
        with self._lock:
            ns = self._ns(namespace)
            return ns.records.get(record_id)

    def delete(self, namespace: str, record_id: str) -> bool:
        with self._lock:
            ns = self._ns(namespace)
            if record_id not in ns.records:
                return False
            del ns.records[record_id]
            ns.invalidate()
            if self._dir is not None:
                self._append_log(namespace, _FLAG_DELETE, record_id)
            return True

    def query(self, namespace: str, probe, top_k: int) -> list[QueryResult]:
        if top_k < 1:
            raise ValueError("top_k must be >= 1")
        probe = np.asarray(probe, dtype=np.float64)
        with self._lock:
            ns = self._ns(namespace)
            if self._dim is not None and probe.shape[0] != self._dim:
                raise DimensionMismatch(
                    f"probe length {probe.shape[0]} != store dimension {self._dim}"
                )
            pnorm = np.linalg.norm(probe)
            if pnorm == 0.0:
                raise ZeroNorm("cannot query with a zero-norm vector")
            ids, matrix, norms = ns.index()
            if not ids:
                return []
            sims = matrix @ probe / (norms * pnorm)
            dists = np.clip(1.0 - sims, 0.0, 2.0)
            order = sorted(range(len(ids)), key=lambda i: (dists[i], ids[i]))
            out = []
            for i in order[:top_k]:
                rec = ns.records[ids[i]]
                out.append(QueryResult(ids[i], float(dists[i]), dict(rec.metadata)))
            return out

    def stats(self, namespace: str) -> tuple[int, int | None]:
        with self._lock:
            ns = self._ns(namespace)
            return len(ns.records), self._dim

    def namespaces(self) -> list[str]:
        with self._lock:
            return list(self._namespaces.keys())

    def total_count(self) -> int:
        with self._lock:
            return sum(len(ns.records) for ns in self._namespaces.values())

    def manifest(self) -> StoreManifest:
        with self._lock:
            return StoreManifest(
                dimension=self._dim,
                namespaces=[(n, len(ns.records)) for n, ns in self._namespaces.items()],
            )

    # -- persistence -----------------------------------------------------

    @property
    def dimension(self) -> int | None:
        return self._dim

    def persist(self, directory: str | Path) -> StoreManifest:
        """Write a compacted snapshot of the whole store to ``directory``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with self._lock:
            for name, ns in self._namespaces.items():
                self._write_snapshot(directory / _snap_name(name), ns)
                log = directory / _log_name(name)
                if log.exists():
                    log.unlink()
            man = self.manifest()
            _write_manifest(directory, man)
            return man

    def compact(self) -> StoreManifest:
        """Fold the append-only logs into the snapshots (durable mode only)."""
        if self._dir is None:
            return self.manifest()
        return self.persist(self._dir)

    @classmethod
    def load(cls, directory: str | Path) -> "VectorStore":
        store = cls()
        store._load_dir(Path(directory))
        return store

    def attach(self, directory: str | Path):
        """Start journaling subsequent writes under ``directory``."""
        self._dir = Path(directory)
        self._dir.mkdir(parents=True, exist_ok=True)

    def _load_dir(self, directory: Path):
        man_path = directory / "manifest.json"
        if not man_path.exists():
            raise CorruptFile(f"missing manifest.json in {directory}")
        man = json.loads(man_path.read_text())
        if man.get("format_version") != FORMAT_VERSION:
            raise CorruptFile(f"unsupported format_version {man.get('format_version')}")
        self._dim = man.get("dimension")
        self._namespaces = {}
        for name in man.get("namespaces", {}):
            ns = self._namespaces[name] = _Namespace()
            snap = directory / _snap_name(name)
            if snap.exists():
                self._read_snapshot(snap, ns)
            log = directory / _log_name(name)
            if log.exists():
                self._replay_log(log, ns)
        self._dir = directory

    def _append_log(self, namespace: str, flag: int, payload):
        path = self._dir / _log_name(namespace)
        buf = io.BytesIO()
        buf.write(struct.pack("<B", flag))
        if flag == _FLAG_UPSERT:
            _write_record(buf, payload)
        else:
            rid = payload.encode("utf-8")
            buf.write(struct.pack("<H", len(rid)))
            buf.write(rid)
        with open(path, "ab") as f:
            f.write(buf.getvalue())
        _write_manifest(self._dir, self.manifest())

    def _write_snapshot(self, path: Path, ns: _Namespace):
        tmp = path.with_suffix(".tmp")
        with open(tmp, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<H", FORMAT_VERSION))
            f.write(struct.pack("<I", self._dim or 0))
            f.write(struct.pack("<Q", len(ns.records)))
            for rec in ns.records.values():
                _write_record(f, rec)
        os.replace(tmp, path)

    def _read_snapshot(self, path: Path, ns: _Namespace):
        data = path.read_bytes()
        if data[:4] != MAGIC:
            raise CorruptFile(f"bad magic in {path}", offset=0)
        off = 4
        try:
            (version,) = struct.unpack_from("<H", data, off)
            off += 2
            if version != FORMAT_VERSION:
                raise CorruptFile(f"unsupported snapshot version {version}", offset=4)
            (dim,) = struct.unpack_from("<I", data, off)
            off += 4
            (count,) = struct.unpack_from("<Q", data, off)
            off += 8
            if self._dim is None and dim:
                self._dim = dim
            for _ in range(count):
                rec, off = _read_record(data, off, dim)
                ns.records[rec.id] = rec
        except struct.error as e:
            raise CorruptFile(f"truncated snapshot {path}: {e}", offset=off) from e
        ns.invalidate()

    def _replay_log(self, path: Path, ns: _Namespace):
        data = path.read_bytes()
        off = 0
        try:
            while off < len(data):
                (flag,) = struct.unpack_from("<B", data, off)
                off += 1
                if flag == _FLAG_UPSERT:
                    rec, off = _read_record(data, off, self._dim or 0)
                    ns.records[rec.id] = rec
                elif flag == _FLAG_DELETE:
                    (n,) = struct.unpack_from("<H", data, off)
                    off += 2
                    rid = data[off : off + n].decode("utf-8")
                    off += n
                    ns.records.pop(rid, None)
                else:
                    raise CorruptFile(f"bad log flag {flag} in {path}", offset=off - 1)
        except struct.error as e:
            raise CorruptFile(f"truncated log {path}: {e}", offset=off) from e
        ns.invalidate()


def _snap_name(namespace: str) -> str:
    return f"ns_{quote(namespace, safe='')}.snapshot"


def _log_name(namespace: str) -> str:
    return f"ns_{quote(namespace, safe='')}.log"


def _write_manifest(directory: Path, man: StoreManifest):
    tmp = directory / "manifest.json.tmp"
    tmp.write_text(
        json.dumps(
            {
                "format_version": man.format_version,
                "dimension": man.dimension,
                "namespaces": {n: c for n, c in man.namespaces},
            }
        )
    )
    os.replace(tmp, directory / "manifest.json")


def _write_record(f, rec: VectorRecord):
    rid = rec.id.encode("utf-8")
    f.write(struct.pack("<H", len(rid)))
    f.write(rid)
    f.write(struct.pack("<H", len(rec.metadata)))
    for k, v in rec.metadata.items():
        kb, vb = k.encode("utf-8"), v.encode("utf-8")
        f.write(struct.pack("<H", len(kb)))
        f.write(kb)
        f.write(struct.pack("<H", len(vb)))
        f.write(vb)
    f.write(np.asarray(rec.vector, dtype="<f4").tobytes())


def _read_record(data: bytes, off: int, dim: int) -> tuple[VectorRecord, int]:
    (n,) = struct.unpack_from("<H", data, off)
    off += 2
    rid = data[off : off + n].decode("utf-8")
    off += n
    (nmeta,) = struct.unpack_from("<H", data, off)
    off += 2
    meta = {}
    for _ in range(nmeta):
        (kl,) = struct.unpack_from("<H", data, off)
        off += 2
        k = data[off : off + kl].decode("utf-8")
        off += kl
        (vl,) = struct.unpack_from("<H", data, off)
        off += 2
        v = data[off : off + vl].decode("utf-8")
        off += vl
        meta[k] = v
    nbytes = dim * 4
    if off + nbytes > len(data):
        raise CorruptFile("truncated vector payload", offset=off)
    vec = np.frombuffer(data[off : off + nbytes], dtype="<f4").copy()
    off += nbytes
    return VectorRecord(rid, vec, meta), off
