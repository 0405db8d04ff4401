"""At-least-once task queue: broker abstraction, durable file broker, and
worker loops for the two task kinds (contract expansion, single-NFT embed).

Delivery is at-least-once: an unacked message reappears after its lease
expires. Correctness downstream relies on key-based idempotency (the
deterministic vector_id), never on exactly-once delivery or ordering.
"""

from __future__ import annotations

import logging
import struct
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicatePending, ExpiredReceipt, ProviderUnavailable, UnvdError
from .metadata_store import MetadataStore, NftRecord, TaskRecord, vector_id
from .vector_store import VectorRecord, VectorStore

log = logging.getLogger(__name__)

DEFAULT_VISIBILITY_TIMEOUT = 30.0
DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_BACKOFFS = (1.0, 4.0, 16.0)


@dataclass(frozen=True)
class QueueMessage:
    message_id: str
    body: str  # task_id reference
    enqueued_at: float


@dataclass(frozen=True)
class LeaseReceipt:
    message_id: str
    lease_deadline: float
    token: str


class InMemoryBroker:
    """Visibility-timeout queue held in memory; used by tests and by the
    single-process service."""

    def __init__(self):
        self._lock = threading.Lock()
        # message_id -> [body, enqueued_at, state, lease_deadline, token]
        self._messages: dict[str, list] = {}

    def send(self, body: str) -> str:
        message_id = uuid.uuid4().hex
        with self._lock:
            self._messages[message_id] = [body, time.time(), "ready", 0.0, ""]
        return message_id

    def receive(self, visibility_timeout: float) -> tuple[QueueMessage, LeaseReceipt] | None:
        if visibility_timeout <= 0:
            raise ValueError("visibility_timeout must be > 0")
        now = time.time()
        with self._lock:
            for mid, slot in self._messages.items():
                body, enq, state, deadline, _ = slot
                if state == "ready" or (state == "leased" and deadline <= now):
                    token = uuid.uuid4().hex
                    slot[2] = "leased"
                    slot[3] = now + visibility_timeout
                    slot[4] = token
                    return (
                        QueueMessage(mid, body, enq),
                        LeaseReceipt(mid, slot[3], token),
                    )
        return None

    def _resolve(self, receipt: LeaseReceipt):
        slot = self._messages.get(receipt.message_id)
        if slot is None or slot[4] != receipt.token:
            raise ExpiredReceipt(receipt.message_id)
        if slot[3] <= time.time():
            raise ExpiredReceipt(receipt.message_id)
        return slot

    def ack(self, receipt: LeaseReceipt):
        with self._lock:
            self._resolve(receipt)
            del self._messages[receipt.message_id]

    def nack(self, receipt: LeaseReceipt):
        with self._lock:
            slot = self._resolve(receipt)
            slot[2] = "ready"
            slot[3] = 0.0
            slot[4] = ""

    def depth(self) -> int:
        with self._lock:
            return len(self._messages)


# durable queue frame: u32 total_len, u8 state, f64 lease_deadline,
# u16 id_len, id bytes, body bytes (rest of frame)
_STATE_READY = 0
_STATE_LEASED = 1
_STATE_ACKED = 2
_HEADER = struct.Struct("<IBd")


class FileBroker:
    """Single-file durable queue honoring the same visibility-timeout
    contract as InMemoryBroker. State changes patch the frame in place."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._frames: dict[str, dict] = {}  # message_id -> frame info
        if self.path.exists():
            self._scan()
        else:
            self.path.touch()

    def _scan(self):
        data = self.path.read_bytes()
        off = 0
        while off + _HEADER.size <= len(data):
            total_len, state, deadline = _HEADER.unpack_from(data, off)
            frame_end = off + _HEADER.size + total_len
            if frame_end > len(data):
                break  # truncated tail frame: drop
            payload = data[off + _HEADER.size : frame_end]
            (id_len,) = struct.unpack_from("<H", payload, 0)
            mid = payload[2 : 2 + id_len].decode("utf-8")
            body = payload[2 + id_len :].decode("utf-8")
            if state != _STATE_ACKED:
                self._frames[mid] = {
                    "offset": off,
                    "state": state,
                    "deadline": deadline,
                    "body": body,
                    "token": "",
                    "total_len": total_len,
                }
            off = frame_end

    def _patch(self, offset: int, state: int, deadline: float, total_len: int):
        with open(self.path, "r+b") as f:
            f.seek(offset)
            f.write(_HEADER.pack(total_len, state, deadline))

    def send(self, body: str) -> str:
        mid = uuid.uuid4().hex
        mid_b = mid.encode("utf-8")
        body_b = body.encode("utf-8")
        payload = struct.pack("<H", len(mid_b)) + mid_b + body_b
        with self._lock:
            with open(self.path, "ab") as f:
                offset = f.tell()
                f.write(_HEADER.pack(len(payload), _STATE_READY, 0.0))
                f.write(payload)
            self._frames[mid] = {
                "offset": offset,
                "state": _STATE_READY,
                "deadline": 0.0,
                "body": body,
                "token": "",
                "total_len": len(payload),
            }
        return mid

    def receive(self, visibility_timeout: float) -> tuple[QueueMessage, LeaseReceipt] | None:
        if visibility_timeout <= 0:
            raise ValueError("visibility_timeout must be > 0")
        now = time.time()
        with self._lock:
            for mid, fr in self._frames.items():
                if fr["state"] == _STATE_READY or (
                    fr["state"] == _STATE_LEASED and fr["deadline"] <= now
                ):
                    fr["state"] = _STATE_LEASED
                    fr["deadline"] = now + visibility_timeout
                    fr["token"] = uuid.uuid4().hex
                    self._patch(fr["offset"], _STATE_LEASED, fr["deadline"], fr["total_len"])
                    return (
                        QueueMessage(mid, fr["body"], 0.0),
                        LeaseReceipt(mid, fr["deadline"], fr["token"]),
                    )
        return None

    def _resolve(self, receipt: LeaseReceipt) -> dict:
        fr = self._frames.get(receipt.message_id)
        if fr is None or fr["token"] != receipt.token or fr["deadline"] <= time.time():
            raise ExpiredReceipt(receipt.message_id)
        return fr

    def ack(self, receipt: LeaseReceipt):
        with self._lock:
            fr = self._resolve(receipt)
            self._patch(fr["offset"], _STATE_ACKED, 0.0, fr["total_len"])
            del self._frames[receipt.message_id]

    def nack(self, receipt: LeaseReceipt):
        with self._lock:
            fr = self._resolve(receipt)
            fr["state"] = _STATE_READY
            fr["deadline"] = 0.0
            fr["token"] = ""
            self._patch(fr["offset"], _STATE_READY, 0.0, fr["total_len"])

    def depth(self) -> int:
        with self._lock:
            return len(self._frames)


@dataclass
class WorkerStats:
    processed: int = 0
    succeeded: int = 0
    failed: int = 0
    per_kind: dict = field(default_factory=lambda: {"contract": 0, "nft": 0})
    started_at: float = field(default_factory=time.time)

    def throughput(self) -> float:
        elapsed = time.time() - self.started_at
        return self.processed / elapsed if elapsed > 0 else 0.0


class Pipeline:
    """Binds broker, stores, provider, and embedder into the two task
    handlers plus the worker loop."""

    def __init__(
        self,
        broker,
        metadata: MetadataStore,
        vectors: VectorStore,
        provider,
        embed_fn,
        fetch_fn,
        namespace: str = "main",
        visibility_timeout: float = DEFAULT_VISIBILITY_TIMEOUT,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        backoffs: tuple = DEFAULT_BACKOFFS,
    ):
        self.broker = broker
        self.metadata = metadata
        self.vectors = vectors
        self.provider = provider
        self.embed_fn = embed_fn
        self.fetch_fn = fetch_fn
        self.namespace = namespace
        self.visibility_timeout = visibility_timeout
        self.max_attempts = max_attempts
        self.backoffs = backoffs
        self.stats = WorkerStats()
        self._stats_lock = threading.Lock()
        self._enqueue_lock = threading.Lock()

    # -- enqueue -----------------------------------------------------------

    def enqueue_contract(self, chain: str, address: str) -> str:
        with self._enqueue_lock:
            for t in self.metadata.list_tasks():
                if (
                    t.kind == "contract"
                    and t.payload.get("address") == address
                    and t.payload.get("chain") == chain
                    and t.status in ("pending", "processing")
                ):
                    raise DuplicatePending(f"contract {chain}:{address} already queued")
            task = TaskRecord(
                task_id=uuid.uuid4().hex,
                kind="contract",
                payload={"chain": chain, "address": address},
            )
            from .metadata_store import ContractRecord  # validate address format
            ContractRecord(address=address, chain=chain).validate()
            self.metadata.put_task(task)
            self.broker.send(task.task_id)
            return task.task_id

    def enqueue_nft(self, chain: str, address: str, token_id: str, media_url: str,
                    metadata_url: str | None = None) -> str:
        key = vector_id(chain, address, token_id)
        with self._enqueue_lock:
            # spawn is idempotent by NFT key: a contract-task retry must not
            # duplicate tasks it already created
            for t in self.metadata.list_tasks():
                if t.kind == "nft" and t.payload.get("key") == key:
                    if t.status == "failed":
                        self.metadata.transition_task(t.task_id, "pending")
                        self.broker.send(t.task_id)
                    return t.task_id
            task = TaskRecord(
                task_id=uuid.uuid4().hex,
                kind="nft",
                payload={
                    "chain": chain,
                    "address": address,
                    "token_id": token_id,
                    "media_url": media_url,
                    "metadata_url": metadata_url,
                    "key": key,
                },
            )
            self.metadata.put_task(task)
            self.broker.send(task.task_id)
            return task.task_id

    def retry_task(self, task_id: str) -> TaskRecord:
        task = self.metadata.transition_task(task_id, "pending")
        self.broker.send(task_id)
        return task

    # -- task handlers -------------------------------------------------------

    def run_contract_task(self, task: TaskRecord) -> int:
        chain = task.payload["chain"]
        address = task.payload["address"]
        from .metadata_store import ContractRecord

        entries = self.provider.list_nfts(address)
        contract = ContractRecord(address=address, chain=chain)
        self.metadata.put_contract(contract)
        spawned = 0
        for e in entries:
            self.enqueue_nft(chain, e.contract_address, e.token_id, e.media_url,
                             e.metadata_url)
            spawned += 1
        return spawned

    def run_nft_task(self, task: TaskRecord) -> str:
        p = task.payload
        vid = p["key"]
        nft = NftRecord(
            chain=p["chain"],
            contract_address=p["address"],
            token_id=p["token_id"],
            media_url=p["media_url"],
            metadata_url=p.get("metadata_url"),
        )
        try:
            blob = self.fetch_fn(p["media_url"])
            vec = self.embed_fn(blob.bytes)
        except UnvdError as e:
            nft.status = "failed"
            nft.last_error = type(e).__name__
            self.metadata.put_nft(nft)
            raise
        self.vectors.upsert(
            self.namespace,
            VectorRecord(id=vid, vector=vec, metadata={"media_url": p["media_url"]}),
        )
        nft.status = "embedded"
        self.metadata.put_nft(nft)
        return vid

    # -- worker loop ---------------------------------------------------------

    def process_one(self) -> bool:
        """Receive and process a single message. Returns False if the queue
        yielded nothing."""
        got = self.broker.receive(self.visibility_timeout)
        if got is None:
            return False
        message, receipt = got
        task = self.metadata.get_task(message.body)
        if task is None or task.status in ("done",):
            # redelivery of an already-finished task: drop it
            self._safe_ack(receipt)
            return True
        try:
            task = self.metadata.transition_task(task.task_id, "processing")
        except UnvdError:
            # concurrently claimed or terminal; let the other holder finish
            self._safe_ack(receipt)
            return True
        try:
            if task.kind == "contract":
                self.run_contract_task(task)
            else:
                self.run_nft_task(task)
            self.metadata.transition_task(task.task_id, "done")
            self._safe_ack(receipt)
            self._record(task.kind, ok=True)
        except Exception as e:  # task-level failure never kills the loop
            err = f"{type(e).__name__}: {e}"
            try:
                task = self.metadata.transition_task(task.task_id, "failed", error=err)
            except UnvdError:
                pass
            retryable = isinstance(e, ProviderUnavailable)
            if retryable and task.attempts < self.max_attempts:
                backoff = self.backoffs[min(task.attempts - 1, len(self.backoffs) - 1)]
                time.sleep(backoff)
                self.metadata.transition_task(task.task_id, "pending")
                self._safe_nack(receipt)
            else:
                self._safe_ack(receipt)
                self._record(task.kind, ok=False)
        return True

    def _safe_ack(self, receipt):
        try:
            self.broker.ack(receipt)
        except ExpiredReceipt:
            log.warning("ack after lease expiry on %s; message may redeliver",
                        receipt.message_id)

    def _safe_nack(self, receipt):
        try:
            self.broker.nack(receipt)
        except ExpiredReceipt:
            pass

    def _record(self, kind: str, ok: bool):
        with self._stats_lock:
            self.stats.processed += 1
            if ok:
                self.stats.succeeded += 1
            else:
                self.stats.failed += 1
            self.stats.per_kind[kind] = self.stats.per_kind.get(kind, 0) + 1

    def worker_loop(self, concurrency: int = 1, stop: threading.Event | None = None,
                    idle_sleep: float = 0.02, drain: bool = False):
        """Run ``concurrency`` consumers until ``stop`` is set (or, with
        drain=True, until the queue is empty). Finishes in-flight leases."""
        if concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        stop = stop or threading.Event()

        def consume():
            while not stop.is_set():
                try:
                    busy = self.process_one()
                except Exception:
                    log.exception("worker iteration failed")
                    busy = False
                if not busy:
                    if drain and self.broker.depth() == 0:
                        return
                    stop.wait(idle_sleep)

        threads = [threading.Thread(target=consume, daemon=True) for _ in range(concurrency)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    def run_until_quiescent(self, concurrency: int = 1, timeout: float = 120.0):
        """Drain the queue with n workers; returns when no messages remain."""
        stop = threading.Event()
        deadline = time.time() + timeout
        runner = threading.Thread(
            target=self.worker_loop,
            kwargs={"concurrency": concurrency, "stop": stop, "drain": False},
            daemon=True,
        )
        runner.start()
        while time.time() < deadline:
            if self.broker.depth() == 0:
                break
            time.sleep(0.05)
        stop.set()
        runner.join(timeout=10)
