"""Document store for contract, NFT, and task records.

Persistence is newline-delimited JSON, one self-describing record per line,
appended on every write; on load, later lines win (last-write-wins). Files
live under a data directory as contracts.ndjson, nfts.ndjson, tasks.ndjson.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import IllegalTransition, SchemaViolation, UnknownContract, UnknownTask

_ADDRESS_RE = re.compile(r"^0x[0-9a-f]{40}$")
_TOKEN_ID_RE = re.compile(r"^[0-9]+$")

NFT_STATUSES = ("discovered", "embedded", "failed")
TASK_STATUSES = ("pending", "processing", "done", "failed")
TASK_KINDS = ("contract", "nft")

# legal task status transitions: the DAG plus the single retry edge
_LEGAL_TRANSITIONS = {
    ("pending", "processing"),
    ("processing", "done"),
    ("processing", "failed"),
    ("failed", "pending"),
}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def vector_id(chain: str, contract_address: str, token_id: str) -> str:
    return f"{chain}:{contract_address}:{token_id}"


@dataclass
class ContractRecord:
    address: str
    chain: str = "ethereum"
    name: str | None = None
    token_standard: str = "ERC-721"
    discovered_at: str = field(default_factory=_now)

    def validate(self):
        if not _ADDRESS_RE.match(self.address):
            raise SchemaViolation(f"bad contract address: {self.address!r}")


@dataclass
class NftRecord:
    chain: str
    contract_address: str
    token_id: str  # decimal text; ERC-721 ids are 256-bit
    media_url: str
    metadata_url: str | None = None
    token_standard: str = "ERC-721"
    status: str = "discovered"
    last_error: str | None = None
    vector_id: str = ""

    def __post_init__(self):
        if not self.vector_id:
            self.vector_id = vector_id(self.chain, self.contract_address, self.token_id)

    def validate(self):
        if not _ADDRESS_RE.match(self.contract_address):
            raise SchemaViolation(f"bad contract address: {self.contract_address!r}")
        if not _TOKEN_ID_RE.match(self.token_id):
            raise SchemaViolation(f"token_id must be decimal text: {self.token_id!r}")
        if self.status not in NFT_STATUSES:
            raise SchemaViolation(f"bad NFT status: {self.status!r}")
        expected = vector_id(self.chain, self.contract_address, self.token_id)
        if self.vector_id != expected:
            raise SchemaViolation(f"vector_id {self.vector_id!r} != {expected!r}")


@dataclass
class TaskRecord:
    task_id: str
    kind: str
    payload: dict
    status: str = "pending"
    attempts: int = 0
    last_error: str | None = None
    created_at: str = field(default_factory=_now)
    updated_at: str = field(default_factory=_now)
    transitions: list = field(default_factory=list)  # [(status, timestamp)]

    def validate(self):
        if not self.task_id:
            raise SchemaViolation("task_id must be non-empty")
        if self.kind not in TASK_KINDS:
            raise SchemaViolation(f"bad task kind: {self.kind!r}")
        if self.status not in TASK_STATUSES:
            raise SchemaViolation(f"bad task status: {self.status!r}")


class MetadataStore:
    """File-backed document store with an in-memory keyed index.

    Concurrent readers are safe; writes are serialized by an internal lock.
    """

    def __init__(self, data_dir: str | Path | None = None):
        self._lock = threading.RLock()
        self._contracts: dict[tuple[str, str], ContractRecord] = {}
        self._nfts: dict[tuple[str, str, str], NftRecord] = {}
        self._tasks: dict[str, TaskRecord] = {}
        self._dir = Path(data_dir) if data_dir is not None else None
        if self._dir is not None:
            self._dir.mkdir(parents=True, exist_ok=True)
            self._load()

    # -- persistence -----------------------------------------------------

    def _load(self):
        for name, cls, keyfn, target in (
            ("contracts.ndjson", ContractRecord, lambda r: (r.chain, r.address), self._contracts),
            ("nfts.ndjson", NftRecord, lambda r: (r.chain, r.contract_address, r.token_id), self._nfts),
            ("tasks.ndjson", TaskRecord, lambda r: r.task_id, self._tasks),
        ):
            path = self._dir / name
            if not path.exists():
                continue
            with open(path, encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    rec = cls(**json.loads(line))
                    target[keyfn(rec)] = rec

    def _append(self, filename: str, record):
        if self._dir is None:
            return
        with open(self._dir / filename, "a", encoding="utf-8") as f:
            f.write(json.dumps(asdict(record)) + "\n")

    # -- contracts / NFTs --------------------------------------------------

    def put_contract(self, record: ContractRecord) -> ContractRecord:
        record.validate()
        with self._lock:
            self._contracts[(record.chain, record.address)] = record
            self._append("contracts.ndjson", record)
            return record

    def get_contract(self, chain: str, address: str) -> ContractRecord | None:
        with self._lock:
            return self._contracts.get((chain, address))

    def put_nft(self, record: NftRecord) -> NftRecord:
        record.validate()
        with self._lock:
            self._nfts[(record.chain, record.contract_address, record.token_id)] = record
            self._append("nfts.ndjson", record)
            return record

    def get_nft(self, chain: str, contract_address: str, token_id: str) -> NftRecord | None:
        with self._lock:
            return self._nfts.get((chain, contract_address, token_id))

    def list_nfts_by_contract(
        self, chain: str, address: str, cursor: str | None = None, limit: int = 100
    ) -> tuple[list[NftRecord], str | None]:
        """Page through a contract's NFTs ordered by numeric token_id.

        Returns (records, next_cursor); next_cursor is None on the final page.
        """
        if not 1 <= limit <= 1000:
            raise ValueError("limit must be in [1, 1000]")
        with self._lock:
            if (chain, address) not in self._contracts:
                raise UnknownContract(f"{chain}:{address}")
            records = sorted(
                (r for r in self._nfts.values()
                 if r.chain == chain and r.contract_address == address),
                key=lambda r: int(r.token_id),
            )
        start = 0
        if cursor is not None:
            after = int(cursor)
            start = next(
                (i for i, r in enumerate(records) if int(r.token_id) > after),
                len(records),
            )
        page = records[start : start + limit]
        next_cursor = page[-1].token_id if start + limit < len(records) else None
        return page, next_cursor

    # -- tasks -------------------------------------------------------------

    def put_task(self, record: TaskRecord) -> TaskRecord:
        record.validate()
        with self._lock:
            if not record.transitions:
                record.transitions = [(record.status, record.created_at)]
            self._tasks[record.task_id] = record
            self._append("tasks.ndjson", record)
            return record

    def get_task(self, task_id: str) -> TaskRecord | None:
        with self._lock:
            return self._tasks.get(task_id)

    def list_tasks(self, status: str | None = None) -> list[TaskRecord]:
        with self._lock:
            tasks = sorted(self._tasks.values(), key=lambda t: t.created_at)
            if status is not None:
                tasks = [t for t in tasks if t.status == status]
            return tasks

    def transition_task(self, task_id: str, new_status: str, error: str | None = None) -> TaskRecord:
        with self._lock:
            task = self._tasks.get(task_id)
            if task is None:
                raise UnknownTask(task_id)
            if (task.status, new_status) not in _LEGAL_TRANSITIONS:
                raise IllegalTransition(f"{task.status} -> {new_status}")
            ts = _now()
            task.status = new_status
            task.updated_at = ts
            task.transitions.append((new_status, ts))
            if new_status == "processing":
                task.attempts += 1
            if error is not None:
                task.last_error = error
            self._append("tasks.ndjson", task)
            return task

    # -- analytics ---------------------------------------------------------

    def analytics_summary(self, vector_count: int | None = None) -> dict:
        with self._lock:
            nfts_by_status = {s: 0 for s in NFT_STATUSES}
            for r in self._nfts.values():
                nfts_by_status[r.status] += 1
            tasks_by_status = {s: 0 for s in TASK_STATUSES}
            for t in self._tasks.values():
                tasks_by_status[t.status] += 1
            summary = {
                "contracts": len(self._contracts),
                "nfts": nfts_by_status,
                "tasks": tasks_by_status,
            }
            if vector_count is not None:
                summary["vectors"] = vector_count
            return summary
