"""Append-only session store.

One JSONL file, one writer. Every record gets a strictly increasing,
gap-free sequence number so a truncated or hand-edited log is detected
on the next startup rather than silently tolerated.
"""

from __future__ import annotations

import json
import os
import threading
import time
from pathlib import Path

from .errors import SchemaError

DATA_DIR_ENV = "PERFCOACH_DATA_DIR"


def default_data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "perfcoach_data"))


class SessionStore:
    """Durable log of service activity (ask transcripts, study ratings)."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._records: list[dict] = []
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SchemaError(f"{self.path}:{line_no}: unreadable record ({exc})")
                for key in ("seq", "kind", "payload"):
                    if key not in record:
                        raise SchemaError(f"{self.path}:{line_no}: record missing {key!r}")
                expected = len(self._records) + 1
                if record["seq"] != expected:
                    raise SchemaError(
                        f"{self.path}:{line_no}: sequence {record['seq']} breaks the "
                        f"gap-free order (expected {expected})"
                    )
                self._records.append(record)

    @property
    def last_seq(self) -> int:
        return len(self._records)

    def append(self, kind: str, payload: dict) -> dict:
        if not kind or not isinstance(payload, dict):
            raise SchemaError("append needs a kind and a payload object")
        with self._lock:
            record = {
                "seq": len(self._records) + 1,
                "kind": kind,
                "ts": time.time(),
                "payload": payload,
            }
            line = json.dumps(record, sort_keys=True, separators=(",", ":"),
                              ensure_ascii=False)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
            self._records.append(record)
            return record

    def records(self, kind: str | None = None) -> list[dict]:
        with self._lock:
            if kind is None:
                return list(self._records)
            return [r for r in self._records if r["kind"] == kind]
