"""Small shared helpers."""

from __future__ import annotations

import json
import os
import tempfile


def atomic_write_text(path, text: str) -> None:
    """Write the full text then rename, so failures never leave partial files."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl(path, docs, meta: dict | None = None) -> None:
    lines = []
    if meta is not None:
        lines.append(json.dumps({"_meta": meta}, sort_keys=True))
    lines.extend(json.dumps(doc, sort_keys=True) for doc in docs)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_jsonl(path) -> tuple[dict | None, list[dict]]:
    """Read line-delimited JSON; returns (meta or None, records)."""
    meta = None
    docs = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            if "_meta" in doc:
                meta = doc["_meta"]
                continue
            docs.append(doc)
    return meta, docs
