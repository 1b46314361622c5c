"""Dataset ingestion, the score cache, the replay store, and session persistence.

The cache is append-only JSONL with last-write-wins semantics per key: a
record is readable only once its full line (newline included) hit the file,
so a crash can never surface a torn record. A lock file guards the single
writer; readers are unrestricted.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .errors import StorageError, VersionConflictError
from .model import (
    SCHEMA_VERSION,
    AlignmentRecord,
    Dataset,
    RecordStatus,
    Sample,
    canonical_json,
    content_hash,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FieldMapping:
    """Maps source JSONL field names onto Sample fields."""

    input_field: str
    output_field: str
    id_field: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.input_field or not self.output_field:
            raise StorageError("input_field and output_field must be named")
        if self.input_field == self.output_field:
            raise StorageError("input_field and output_field must be distinct")


def load_dataset(
    path: str | Path,
    mapping: FieldMapping,
    limit: Optional[int] = None,
    dataset_id: str = "",
) -> Dataset:
    """Read one Sample per JSONL line, in file order.

    Lines missing the configured id field get a deterministic id derived from
    the line index and content, so re-loading the same file reproduces the
    same ids.
    """
    path = Path(path)
    if not path.exists():
        raise StorageError(f"dataset file not found: {path}")
    samples: list[Sample] = []
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if limit is not None and len(samples) >= limit:
                break
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StorageError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise StorageError(f"line {lineno}: expected a JSON object")
            for field_name in (mapping.input_field, mapping.output_field):
                if field_name not in obj:
                    raise StorageError(f"line {lineno}: field {field_name}")
            raw_input = str(obj[mapping.input_field])
            raw_output = str(obj[mapping.output_field])
            if mapping.id_field is not None and mapping.id_field in obj:
                sample_id = str(obj[mapping.id_field])
            else:
                sample_id = content_hash(str(lineno - 1), raw_input, raw_output)
            samples.append(Sample(id=sample_id, input=raw_input, output=raw_output))
    return Dataset(id=dataset_id or content_hash(str(path), str(limit)), samples=tuple(samples), source=str(path))


def write_dataset_jsonl(dataset: Dataset, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as handle:
        for sample in dataset.samples:
            handle.write(canonical_json(sample.to_dict(), indent=None) + "\n")
    tmp.replace(path)
    return path


# ---------------------------------------------------------------------------
# Append-only JSONL key-value store
# ---------------------------------------------------------------------------


class _FileLock:
    """Pidfile-style writer lock; stale locks from dead processes are reclaimed."""

    def __init__(self, path: Path) -> None:
        self.path = path
        self._held = False

    def acquire(self) -> None:
        for _ in range(2):
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                os.write(fd, str(os.getpid()).encode("ascii"))
                os.close(fd)
                self._held = True
                return
            except FileExistsError:
                if self._stale():
                    self.path.unlink(missing_ok=True)
                    continue
                raise StorageError(f"cache writer lock already held: {self.path}")
        raise StorageError(f"could not acquire writer lock: {self.path}")

    def _stale(self) -> bool:
        try:
            pid = int(self.path.read_text().strip() or "0")
        except (OSError, ValueError):
            return True
        if pid == os.getpid():
            return True
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            return True
        except PermissionError:
            return False
        return False

    def release(self) -> None:
        if self._held:
            self.path.unlink(missing_ok=True)
            self._held = False


class JsonlKV:
    """Append-only JSONL segments with an in-memory index, last write wins.

    Compaction rewrites live entries into a fresh segment and removes the
    older ones; because later segments win on replay, a crash between those
    two steps only leaves harmless duplicates.
    """

    def __init__(self, directory: str | Path, compact_threshold: int = 10_000) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.compact_threshold = compact_threshold
        self._lock = _FileLock(self.directory / ".lock")
        self._mutex = threading.Lock()
        self._index: dict[str, Any] = {}
        self._dead = 0
        self._handle = None
        self._load()

    def _segments(self) -> list[Path]:
        return sorted(self.directory.glob("segment-*.jsonl"))

    def _load(self) -> None:
        for segment in self._segments():
            with segment.open("r", encoding="utf-8") as handle:
                for line in handle:
                    if not line.endswith("\n"):
                        log.warning("ignoring torn record at end of %s", segment.name)
                        continue
                    if not line.strip():
                        continue
                    try:
                        entry = json.loads(line)
                        key, value = entry["key"], entry["value"]
                    except (json.JSONDecodeError, KeyError, TypeError):
                        log.warning("ignoring corrupt cache entry in %s", segment.name)
                        continue
                    if key in self._index:
                        self._dead += 1
                    self._index[key] = value

    def _open_writer(self) -> None:
        if self._handle is not None:
            return
        self._lock.acquire()
        segments = self._segments()
        if segments:
            target = segments[-1]
            self._repair_tail(target)
        else:
            target = self.directory / "segment-000001.jsonl"
        self._handle = target.open("a", encoding="utf-8")

    @staticmethod
    def _repair_tail(path: Path) -> None:
        # drop a torn trailing line so the next append starts on a boundary
        with path.open("rb+") as handle:
            handle.seek(0, os.SEEK_END)
            size = handle.tell()
            if size == 0:
                return
            handle.seek(-1, os.SEEK_END)
            if handle.read(1) == b"\n":
                return
            handle.seek(0)
            data = handle.read()
            cut = data.rfind(b"\n")
            handle.truncate(cut + 1 if cut >= 0 else 0)

    def get(self, key: str) -> Optional[Any]:
        with self._mutex:
            return self._index.get(key)

    def __contains__(self, key: str) -> bool:
        with self._mutex:
            return key in self._index

    def __len__(self) -> int:
        with self._mutex:
            return len(self._index)

    def keys(self) -> list[str]:
        with self._mutex:
            return list(self._index.keys())

    def put(self, key: str, value: Any) -> None:
        with self._mutex:
            self._open_writer()
            line = json.dumps({"key": key, "value": value}, ensure_ascii=False)
            self._handle.write(line + "\n")
            self._handle.flush()
            if key in self._index:
                self._dead += 1
            self._index[key] = value
            if self._dead >= self.compact_threshold:
                self._compact_locked()

    def _compact_locked(self) -> None:
        self._handle.close()
        self._handle = None
        old_segments = self._segments()
        next_number = 1
        if old_segments:
            next_number = int(old_segments[-1].stem.split("-")[1]) + 1
        fresh = self.directory / f"segment-{next_number:06d}.jsonl"
        with fresh.open("w", encoding="utf-8") as handle:
            for key, value in self._index.items():
                handle.write(json.dumps({"key": key, "value": value}, ensure_ascii=False) + "\n")
        for segment in old_segments:
            segment.unlink()
        self._dead = 0
        self._handle = fresh.open("a", encoding="utf-8")

    def compact(self) -> None:
        with self._mutex:
            self._open_writer()
            self._compact_locked()

    def close(self) -> None:
        with self._mutex:
            if self._handle is not None:
                self._handle.close()
                self._handle = None
            self._lock.release()

    def __enter__(self) -> "JsonlKV":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# ---------------------------------------------------------------------------
# Score cache
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScoreCacheKey:
    """Cache identity for one (sample content, subgoal, evaluator) evaluation."""

    content_digest: str
    subgoal_id: str
    backend_id: str

    @classmethod
    def for_pair(cls, sample: Sample, subgoal_id: str, backend_id: str) -> "ScoreCacheKey":
        return cls(content_hash(sample.input, sample.output), subgoal_id, backend_id)

    @property
    def encoded(self) -> str:
        return f"{self.content_digest}|{self.subgoal_id}|{self.backend_id}"


class ScoreCache:
    """Persistent store of alignment records keyed by content, not sample id.

    Failed records are kept only when the failure is terminal (format); a
    transport failure must be retried on the next run, so it is never cached.
    """

    def __init__(self, directory: str | Path) -> None:
        self._kv = JsonlKV(directory)
        self.hits = 0
        self.misses = 0

    def get(self, key: ScoreCacheKey) -> Optional[AlignmentRecord]:
        raw = self._kv.get(key.encoded)
        if raw is None:
            self.misses += 1
            return None
        try:
            record = AlignmentRecord.from_dict(raw)
        except Exception:
            log.warning("corrupt cache entry for %s treated as miss", key.encoded)
            self.misses += 1
            return None
        self.hits += 1
        return record

    def put(self, key: ScoreCacheKey, record: AlignmentRecord) -> None:
        if record.status is RecordStatus.FAILED and record.failure_kind != "format":
            return
        self._kv.put(key.encoded, record.to_dict())

    def __len__(self) -> int:
        return len(self._kv)

    def close(self) -> None:
        self._kv.close()

    def __enter__(self) -> "ScoreCache":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class ReplayStore:
    """Recorded backend calls, keyed by an operation fingerprint."""

    def __init__(self, directory: str | Path) -> None:
        self._kv = JsonlKV(directory)

    def get(self, key: str) -> Optional[dict]:
        return self._kv.get(key)

    def put(self, key: str, payload: dict) -> None:
        self._kv.put(key, payload)

    def backend_id(self) -> Optional[str]:
        return self._kv.get("__backend_id__")

    def set_backend_id(self, backend_id: str) -> None:
        existing = self._kv.get("__backend_id__")
        if existing is None:
            self._kv.put("__backend_id__", backend_id)
        elif existing != backend_id:
            raise StorageError(
                f"replay store was recorded with backend {existing!r}, not {backend_id!r}"
            )

    def __len__(self) -> int:
        # the backend-id marker is bookkeeping, not a recording
        return len(self._kv) - (1 if self.backend_id() is not None else 0)

    def close(self) -> None:
        self._kv.close()


# ---------------------------------------------------------------------------
# Versioned JSON document store (sessions, job results)
# ---------------------------------------------------------------------------


class DocumentStore:
    """One JSON document per id, with optimistic version checks on save."""

    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._mutex = threading.Lock()

    def _path(self, doc_id: str) -> Path:
        safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in doc_id)
        return self.directory / f"{safe}.json"

    def load(self, doc_id: str) -> Optional[dict]:
        path = self._path(doc_id)
        if not path.exists():
            return None
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise StorageError(f"corrupt document {doc_id!r}: {exc.msg}") from exc

    def save(self, doc_id: str, document: dict, expected_version: Optional[int] = None) -> None:
        """Atomically persist; when ``expected_version`` is given, the stored
        document's version must still equal it or the write is rejected."""
        with self._mutex:
            if expected_version is not None:
                current = self.load(doc_id)
                current_version = current.get("version") if current else None
                if current_version != expected_version:
                    raise VersionConflictError(
                        f"document {doc_id!r} is at version {current_version}, "
                        f"expected {expected_version}"
                    )
            path = self._path(doc_id)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(canonical_json(document), encoding="utf-8")
            tmp.replace(path)

    def ids(self) -> list[str]:
        return sorted(p.stem for p in self.directory.glob("*.json"))

    def delete(self, doc_id: str) -> None:
        self._path(doc_id).unlink(missing_ok=True)
