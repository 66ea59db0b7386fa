"""Content hashing and run manifests."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

_DIGEST_CACHE: dict[tuple[str, int, int], str] = {}


def file_digest(path: str | Path | None) -> str | None:
    if path is None:
        return None
    path = Path(path)
    if not path.is_file():
        return None
    st = path.stat()
    key = (str(path.resolve()), st.st_size, st.st_mtime_ns)
    if key not in _DIGEST_CACHE:
        h = hashlib.sha256()
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
        _DIGEST_CACHE[key] = "sha256:" + h.hexdigest()
    return _DIGEST_CACHE[key]


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(config: dict) -> str:
    return "sha256:" + hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config_path: str | None
    config_hash: str
    model_digest: str | None
    dataset_digest: str | None
    started: str = field(default_factory=utc_now)
    finished: str | None = None
    artifacts: dict[str, str] = field(default_factory=dict)
    status: str = "running"
    notes: list[str] = field(default_factory=list)

    def add(self, path: str | Path) -> None:
        self.artifacts[os.fspath(path)] = file_digest(path)

    def finish(self, status: str = "ok") -> None:
        self.finished = utc_now()
        self.status = status

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def verify(self) -> bool:
        """True when every listed artifact still exists with its recorded digest."""
        return all(file_digest(p) == digest for p, digest in self.artifacts.items())

    @classmethod
    def read(cls, path: str | Path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))
