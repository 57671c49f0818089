"""Newline-delimited JSON snapshot streams.

Every line is one self-contained snapshot object carrying ``version``.
Non-finite floats are written as ``null``: JSON has no token for them and
a reader must never trip on ``NaN``. Energies and NLLs are already capped at
the finite 700 sentinel upstream, so they survive unchanged.
"""

import json
import math

import numpy as np

from ..engine import SCHEMA_VERSION
from ..errors import ConfigError, SinkError

REQUIRED = ("version", "iteration", "samples", "rewards", "advantages", "metrics", "diagnostics")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def encode_snapshot(record):
    missing = [k for k in REQUIRED if k not in record]
    if missing:
        raise ConfigError(f"snapshot record lacks fields {missing}")
    return json.dumps(_clean(record), sort_keys=True, separators=(",", ":"), allow_nan=False)


def decode_snapshot(line):
    rec = json.loads(line)
    if rec.get("version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported snapshot version {rec.get('version')!r}")
    return rec


def write_snapshot(record, sink):
    """Append one line to ``sink`` and flush it."""
    line = encode_snapshot(record)
    try:
        sink.write(line + "\n")
        sink.flush()
    except (OSError, ValueError) as exc:
        raise SinkError(f"snapshot sink failed: {exc}") from exc


class SnapshotWriter:
    """Callable sink for ``engine.train`` that remembers the last durable iteration."""

    def __init__(self, stream):
        self.stream = stream
        self.last_iteration = None
        self.count = 0

    @classmethod
    def open(cls, path):
        try:
            return cls(open(path, "w", encoding="utf-8", newline="\n"))
        except OSError as exc:
            raise SinkError(f"cannot open snapshot file {path}: {exc.strerror}") from None

    def __call__(self, record):
        try:
            write_snapshot(record, self.stream)
        except SinkError as exc:
            exc.last_iteration = self.last_iteration
            raise SinkError(f"{exc} (last durable iteration: {self.last_iteration})",
                            self.last_iteration) from exc
        self.last_iteration = record["iteration"]
        self.count += 1

    def close(self):
        self.stream.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_snapshots(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(decode_snapshot(line))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{n}: unparseable snapshot line ({exc.msg})") from None
    return out
