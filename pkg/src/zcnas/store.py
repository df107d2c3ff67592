"""Append-only experiment ledger.

One JSONL file per experiment (``<dir>/ledger.jsonl``), one record per
line. Appends are line-atomic and guarded by an advisory file lock, so
multiple worker processes can write concurrently; readers always see a
consistent prefix. Each record kind carries a uniqueness key and
duplicates are rejected, which is what makes re-running a pipeline stage
idempotent: completed work is simply skipped.

Record kinds and keys:
    spec         key (spec_hash)        payload {spec_hash, record}
    proxy_score  key (spec_hash, proxy) payload {spec_hash, proxy, value, degenerate}
    run_record   key (spec_hash)        payload (RunRecord dict)
    report       key (name)             payload {name, ...}

A degenerate proxy value is stored as null and read back as -inf.
"""

from __future__ import annotations

import fcntl
import json
import os
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

KINDS = ("spec", "proxy_score", "run_record", "report")


class StoreError(Exception):
    pass


class DuplicateKey(StoreError):
    pass


class SchemaError(StoreError):
    pass


class UnknownExperiment(StoreError):
    pass


@dataclass(frozen=True)
class StoreRecord:
    kind: str
    payload: dict
    experiment_id: str
    created_at: float

    @property
    def key(self) -> tuple:
        return record_key(self.kind, self.payload)


def record_key(kind: str, payload: dict) -> tuple:
    if kind == "spec":
        return (kind, payload["spec_hash"], "", "")
    if kind == "proxy_score":
        return (kind, payload["spec_hash"], payload["proxy"], "")
    if kind == "run_record":
        return (kind, payload["spec_hash"], "", "")
    if kind == "report":
        return (kind, "", "", payload["name"])
    raise SchemaError(f"unknown record kind {kind!r}")


def _validate(kind: str, payload: dict) -> None:
    if kind not in KINDS:
        raise SchemaError(f"unknown record kind {kind!r}")
    if not isinstance(payload, dict):
        raise SchemaError("payload must be a mapping")

    def need(*names):
        for name in names:
            if name not in payload:
                raise SchemaError(f"{kind} record missing field {name!r}")

    if kind == "spec":
        need("spec_hash", "record")
    elif kind == "proxy_score":
        need("spec_hash", "proxy", "value", "degenerate")
        if payload["degenerate"]:
            if payload["value"] is not None:
                raise SchemaError("degenerate proxy_score must carry a null value")
        elif not isinstance(payload["value"], (int, float)) or isinstance(payload["value"], bool):
            raise SchemaError("proxy_score value must be a number")
    elif kind == "run_record":
        need("spec_hash", "seed", "best_val_f1", "test_f1_at_best_val",
             "epochs_completed", "wall_time_s", "diverged")
    elif kind == "report":
        need("name")


def proxy_value_from_payload(payload: dict) -> float:
    return float("-inf") if payload["degenerate"] else float(payload["value"])


class ResultsStore:
    """Ledger for one experiment directory.

    The in-memory index refreshes incrementally: on each access the store
    reads only the bytes appended since its last offset (under the file
    lock), so polling is cheap even for long ledgers.
    """

    def __init__(self, experiment_dir: str | Path, experiment_id: str | None = None):
        self.dir = Path(experiment_dir)
        self.experiment_id = experiment_id or self.dir.name
        self.ledger_path = self.dir / "ledger.jsonl"
        self._offset = 0             # bytes consumed as complete lines
        self._tail = b""             # unterminated bytes after _offset, if any
        self._records: list[StoreRecord] = []
        self._keys: set[tuple] = set()
        self._warned_tail = b""

    # -- internal ---------------------------------------------------------

    def _refresh_locked(self, fh) -> None:
        """Index complete lines appended since the last refresh. An
        unterminated trailing chunk (a writer crashed mid-line) is left
        unconsumed, warned about once, and re-examined next time in case
        another process terminates it."""
        fh.seek(self._offset)
        data = fh.read()
        consumed = 0
        for line in data.splitlines(keepends=True):
            if not line.endswith(b"\n"):
                break
            consumed += len(line)
            text = line.strip()
            if not text:
                continue
            try:
                raw = json.loads(text.decode("utf-8"))
                kind = raw["kind"]
                payload = raw["payload"]
                _validate(kind, payload)
                rec = StoreRecord(kind, payload, raw.get("experiment_id", self.experiment_id),
                                  float(raw.get("created_at", 0.0)))
            except (ValueError, KeyError, SchemaError) as exc:
                warnings.warn(f"{self.ledger_path}: skipping unparseable ledger line: {exc}")
                continue
            if rec.key in self._keys:
                warnings.warn(f"{self.ledger_path}: duplicate record {rec.key} ignored on load")
                continue
            self._keys.add(rec.key)
            self._records.append(rec)
        self._offset += consumed
        self._tail = data[consumed:]
        if self._tail and self._tail != self._warned_tail:
            warnings.warn(f"{self.ledger_path}: ignoring partial trailing line "
                          f"({len(self._tail)} bytes)")
            self._warned_tail = self._tail

    def refresh(self, require_exists: bool = False) -> None:
        if not self.ledger_path.exists():
            if require_exists:
                raise UnknownExperiment(f"no ledger at {self.ledger_path}")
            return
        with open(self.ledger_path, "rb") as fh:
            fcntl.flock(fh.fileno(), fcntl.LOCK_SH)
            try:
                self._refresh_locked(fh)
            finally:
                fcntl.flock(fh.fileno(), fcntl.LOCK_UN)

    # -- public -----------------------------------------------------------

    def append(self, kind: str, payload: dict) -> None:
        """Durably append one record; rejects duplicates of its key."""
        _validate(kind, payload)
        line = json.dumps({"kind": kind, "payload": payload,
                           "experiment_id": self.experiment_id,
                           "created_at": time.time()},
                          sort_keys=True, separators=(",", ":"), allow_nan=False)
        self.dir.mkdir(parents=True, exist_ok=True)
        with open(self.ledger_path, "ab+") as fh:
            fcntl.flock(fh.fileno(), fcntl.LOCK_EX)
            try:
                self._refresh_locked(fh)
                key = record_key(kind, payload)
                if key in self._keys:
                    raise DuplicateKey(f"record already stored: {key}")
                fh.seek(0, os.SEEK_END)
                # terminate a crashed writer's partial line so ours stays parseable
                prefix = b"\n" if self._tail else b""
                fh.write(prefix + line.encode("utf-8") + b"\n")
                fh.flush()
                os.fsync(fh.fileno())
                self._refresh_locked(fh)
            finally:
                fcntl.flock(fh.fileno(), fcntl.LOCK_UN)

    def append_if_new(self, kind: str, payload: dict) -> bool:
        """Append unless the key already exists; returns True if written."""
        try:
            self.append(kind, payload)
            return True
        except DuplicateKey:
            return False

    def records(self, kind: str | None = None,
                require_exists: bool = False) -> list[StoreRecord]:
        self.refresh(require_exists=require_exists)
        if kind is None:
            return list(self._records)
        return [r for r in self._records if r.kind == kind]

    def has(self, kind: str, payload_key: dict) -> bool:
        self.refresh()
        return record_key(kind, payload_key) in self._keys

    def resume_plan(self, sampled_hashes: list[str],
                    proxies: tuple[str, ...]) -> dict[str, list[str]]:
        """Work remaining: hashes missing any proxy row, and hashes
        missing a run record. Completed work is never returned."""
        self.refresh(require_exists=True)
        to_score = []
        to_train = []
        for h in sampled_hashes:
            if any(("proxy_score", h, p, "") not in self._keys for p in proxies):
                to_score.append(h)
            if ("run_record", h, "", "") not in self._keys:
                to_train.append(h)
        return {"to_score": to_score, "to_train": to_train}
