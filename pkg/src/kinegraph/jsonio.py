"""Canonical JSON serialization and run manifests.

Every artifact this package writes goes through :func:`canonical_dumps` so
that identical inputs produce byte-identical files: keys are sorted, floats
are formatted deterministically, NaN/Inf are rejected.

Two float modes exist.  ``sig_digits=9`` (the CLI default) rounds every float
to 9 significant digits before encoding; ``sig_digits=None`` keeps full
precision (shortest round-trip repr), used where bit-exact data round-trips
are required.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import SchemaViolation

__all__ = [
    "canonical_dumps",
    "write_json",
    "load_json",
    "sha256_file",
    "sha256_text",
    "RunManifest",
]


def _canonicalize(obj: Any, sig_digits: int | None):
    if isinstance(obj, dict):
        return {str(k): _canonicalize(v, sig_digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonicalize(v, sig_digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return _canonicalize(obj.tolist(), sig_digits)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"non-finite float in output: {obj}")
        if sig_digits is not None:
            obj = float(f"{obj:.{sig_digits}g}")
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_dumps(obj: Any, sig_digits: int | None = 9) -> str:
    """Serialize to deterministic JSON text (trailing newline included)."""
    canon = _canonicalize(obj, sig_digits)
    return json.dumps(canon, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: str | Path, obj: Any, sig_digits: int | None = 9) -> None:
    Path(path).write_text(canonical_dumps(obj, sig_digits), encoding="utf-8")


def load_json(path: str | Path) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation("/", f"invalid JSON: {exc}") from None


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class RunManifest:
    """Provenance sidecar emitted next to every CLI result file."""

    command: str
    config_digest: str
    input_digests: dict[str, str]
    tool_version: str
    seed: int | None = None
    wall_time_s: float = 0.0
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def finish(self) -> None:
        self.wall_time_s = time.perf_counter() - self._t0

    def write(self, result_path: str | Path) -> Path:
        side = Path(str(result_path) + ".manifest.json")
        payload = {
            "command": self.command,
            "config_digest": self.config_digest,
            "input_digests": self.input_digests,
            "tool_version": self.tool_version,
            "seed": self.seed,
            "wall_time_s": self.wall_time_s,
        }
        write_json(side, payload)
        return side
