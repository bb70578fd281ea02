"""Report serialisation: long-format CSV, test JSON and the run manifest.

Files are written with a fixed float representation and sorted JSON keys so
that identical inputs give byte-identical outputs. The manifest is always
written last; a directory without one holds a partial run.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import os
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import __version__

MANIFEST = "manifest.json"


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def csv_text(columns: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def json_text(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def timestamp() -> str:
    """UTC ISO-8601 time; honours SOURCE_DATE_EPOCH for reproducible manifests."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        when = _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
    else:
        when = _dt.datetime.now(tz=_dt.timezone.utc)
    return when.replace(microsecond=0).isoformat().replace("+00:00", "Z")


class OutputDir:
    """Writes files under one directory and tracks them for the manifest."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.files: list[str] = []

    def prepare(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        stale = self.root / MANIFEST
        if stale.exists():
            stale.unlink()

    def write(self, name: str, text: str) -> Path:
        if Path(name).name != name:
            raise ValueError(f"output name {name!r} must be a bare file name")
        path = self.root / name
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        if name not in self.files:
            self.files.append(name)
        return path

    def inventory(self) -> list[dict]:
        return [
            {"name": name, "sha256": sha256_file(self.root / name), "bytes": (self.root / name).stat().st_size}
            for name in sorted(self.files)
        ]

    def write_manifest(self, meta: dict, started_at: str) -> Path:
        body = {
            "tool": "beaconlab",
            "version": __version__,
            **meta,
            "started_at": started_at,
            "finished_at": timestamp(),
            "files": self.inventory(),
        }
        path = self.root / MANIFEST
        tmp = self.root / (MANIFEST + ".tmp")
        tmp.write_text(json_text(body), encoding="utf-8")
        os.replace(tmp, path)
        return path


def verify_manifest(root: str | os.PathLike) -> list[str]:
    """Names of inventory files whose digest no longer matches (empty when intact)."""
    root = Path(root)
    body = json.loads((root / MANIFEST).read_text(encoding="utf-8"))
    bad = []
    for entry in body["files"]:
        path = root / entry["name"]
        if not path.exists() or sha256_file(path) != entry["sha256"]:
            bad.append(entry["name"])
    return bad
