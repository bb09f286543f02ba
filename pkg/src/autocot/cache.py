"""Content-addressed on-disk cache: one file per entry, atomic writes.

Entries live at <root>/<key[:2]>/<key>.json so partial corruption can only
ever lose a single entry. A corrupt entry is deleted on read (self-heal) and
reported as a miss.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from pathlib import Path

logger = logging.getLogger(__name__)


class DiskCache:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> str | None:
        path = self.path_for(key)
        if not path.exists():
            return None
        try:
            with path.open(encoding="utf-8") as fh:
                entry = json.load(fh)
            return entry["value"]
        except (json.JSONDecodeError, KeyError, UnicodeDecodeError):
            logger.warning("deleting corrupt cache entry %s", path)
            path.unlink(missing_ok=True)
            return None

    def put(self, key: str, value: str) -> None:
        path = self.path_for(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        # write-then-rename keeps concurrent readers from seeing partial entries
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump({"key": key, "value": value}, fh, ensure_ascii=False)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
