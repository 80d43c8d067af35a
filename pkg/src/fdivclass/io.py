"""Atomic file output, config hashing and named random substreams."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_csv(path, header, rows) -> None:
    atomic_write_text(path, csv_text(header, rows))


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON encoding; insensitive to key order."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def substream(seed: int, *names) -> np.random.Generator:
    """Independent generator keyed by (seed, component names).

    Adding a new component name never perturbs existing streams.
    """
    key = "/".join(str(n) for n in names).encode()
    words = np.frombuffer(hashlib.sha256(key).digest(), dtype=np.uint32)
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *words.tolist()])
    return np.random.default_rng(ss)


def derive_seed(seed: int, *names) -> int:
    return int(substream(seed, *names).integers(0, 2**31 - 1))
