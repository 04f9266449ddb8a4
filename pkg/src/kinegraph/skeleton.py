"""Skeleton sequence parsing, canonical serialization and derived streams.

A sequence is a dense ``T x V x d`` coordinate tensor plus light metadata.
Supported sources are the plain-text capture format (frame count line, then
per frame: body count, per body: one ignored header line, a joint count and
one ``x y z ...`` line per joint) and a canonical JSON interchange schema.

Derived representations: difference-vector ("bone") streams driven by a
:class:`~kinegraph.bones.BoneMatrix`, and temporal-difference motion streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import IO, TYPE_CHECKING, Iterable

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyFile,
    JointCountMismatch,
    MalformedLine,
    SchemaViolation,
)
from .jsonio import canonical_dumps

if TYPE_CHECKING:
    from .bones import BoneMatrix

__all__ = [
    "SkeletonSequence",
    "PreprocessConfig",
    "parse_ntu_text",
    "read_canonical",
    "write_canonical",
    "preprocess",
    "bone_stream",
    "motion_stream",
]


@dataclass
class SkeletonSequence:
    """A ``T x V x d`` joint-coordinate tensor with metadata.

    ``flags`` records non-fatal conditions (zero-filled frames from missing
    bodies, repeated degenerate frames) without failing the parse.
    """

    data: np.ndarray
    label: int | None = None
    subject: str | None = None
    body: str | None = None
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 3:
            raise DimensionMismatch(f"expected T x V x d tensor, got ndim={self.data.ndim}")
        t, v, _ = self.data.shape
        if t < 1 or v < 2:
            raise DimensionMismatch(f"need T >= 1 and V >= 2, got T={t}, V={v}")
        if not np.all(np.isfinite(self.data)):
            raise DimensionMismatch("sequence contains NaN/Inf")

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def joints(self) -> int:
        return self.data.shape[1]

    @property
    def dims(self) -> int:
        return self.data.shape[2]


@dataclass
class PreprocessConfig:
    target_frames: int = 64
    center_joint: int = 0
    interpolation: str = "linear"

    def __post_init__(self):
        if self.target_frames < 1:
            raise DimensionMismatch("target_frames must be >= 1")
        if self.interpolation != "linear":
            raise DimensionMismatch(f"unsupported interpolation {self.interpolation!r}")


class _Lines:
    """Line reader tracking 1-based line numbers."""

    def __init__(self, source: Iterable[str]):
        self._it = iter(source)
        self.line_no = 0

    def next(self, expected: str) -> str:
        self.line_no += 1
        try:
            return next(self._it)
        except StopIteration:
            raise MalformedLine(self.line_no, expected, "<EOF>") from None

    def next_int(self, expected: str) -> int:
        raw = self.next(expected)
        try:
            return int(raw.split()[0])
        except (ValueError, IndexError):
            raise MalformedLine(self.line_no, expected, raw.strip()) from None


def parse_ntu_text(source: str | IO[str]) -> list[SkeletonSequence]:
    """Parse a capture-format text record into one sequence per tracked body.

    Bodies are tracked positionally within each frame.  A body missing from a
    frame yields zero-filled joints there and a ``zero_filled_frame:<t>`` flag.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = source
    stripped = text.strip()
    if not stripped:
        raise EmptyFile("empty input")
    lines = _Lines(iter(text.splitlines()))
    n_frames = lines.next_int("integer frame count")
    if n_frames == 0:
        raise EmptyFile("file declares 0 frames")
    if n_frames < 0:
        raise MalformedLine(lines.line_no, "nonnegative frame count", str(n_frames))

    # frames[t][slot] = (joint_count, V x 3 array)
    frames: list[list[np.ndarray]] = []
    for _ in range(n_frames):
        n_bodies = lines.next_int("integer body count")
        if n_bodies < 0:
            raise MalformedLine(lines.line_no, "nonnegative body count", str(n_bodies))
        bodies: list[np.ndarray] = []
        for _ in range(n_bodies):
            lines.next("body header line")
            n_joints = lines.next_int("integer joint count")
            if n_joints < 2:
                raise MalformedLine(lines.line_no, "joint count >= 2", str(n_joints))
            joints = np.zeros((n_joints, 3))
            for j in range(n_joints):
                raw = lines.next("joint coordinate line")
                tokens = raw.split()
                if len(tokens) < 3:
                    raise MalformedLine(lines.line_no, "3 decimal reals x y z", raw.strip())
                try:
                    joints[j] = [float(tokens[0]), float(tokens[1]), float(tokens[2])]
                except ValueError:
                    raise MalformedLine(lines.line_no, "3 decimal reals x y z", raw.strip()) from None
            bodies.append(joints)
        frames.append(bodies)

    n_slots = max(len(bodies) for bodies in frames)
    if n_slots == 0:
        raise EmptyFile("no bodies in any frame")

    sequences = []
    for slot in range(n_slots):
        joint_count = None
        for bodies in frames:
            if slot < len(bodies):
                joint_count = bodies[slot].shape[0]
                break
        data = np.zeros((n_frames, joint_count, 3))
        flags: list[str] = []
        for t, bodies in enumerate(frames):
            if slot < len(bodies):
                if bodies[slot].shape[0] != joint_count:
                    raise JointCountMismatch(
                        f"body {slot}: frame {t} declares {bodies[slot].shape[0]} joints, "
                        f"expected {joint_count}"
                    )
                data[t] = bodies[slot]
            else:
                flags.append(f"zero_filled_frame:{t}")
        sequences.append(SkeletonSequence(data=data, body=str(slot), flags=tuple(flags)))
    return sequences


_CANONICAL_VERSION = 1


def write_canonical(seq: SkeletonSequence, sig_digits: int | None = None) -> bytes:
    """Encode to the canonical JSON schema.

    ``sig_digits=None`` keeps full precision so decode(encode(x)) is
    bit-exact; pass 9 for the compact CLI formatting.
    """
    payload = {
        "version": _CANONICAL_VERSION,
        "frames": seq.frames,
        "joints": seq.joints,
        "dims": seq.dims,
        "label": seq.label,
        "data": seq.data,
    }
    return canonical_dumps(payload, sig_digits=sig_digits).encode("utf-8")


def read_canonical(source: str | bytes | dict) -> SkeletonSequence:
    """Decode the canonical JSON schema, reporting the offending path."""
    if isinstance(source, (str, bytes)):
        import json

        try:
            obj = json.loads(source)
        except json.JSONDecodeError as exc:
            raise SchemaViolation("/", f"invalid JSON: {exc}") from None
    else:
        obj = source
    if not isinstance(obj, dict):
        raise SchemaViolation("/", "expected object")
    for key in ("version", "frames", "joints", "dims", "data"):
        if key not in obj:
            raise SchemaViolation(f"/{key}", "missing")
    if obj["version"] != _CANONICAL_VERSION:
        raise SchemaViolation("/version", f"unsupported version {obj['version']!r}")
    for key in ("frames", "joints", "dims"):
        if not isinstance(obj[key], int) or isinstance(obj[key], bool):
            raise SchemaViolation(f"/{key}", "expected integer")
    label = obj.get("label")
    if label is not None and (not isinstance(label, int) or isinstance(label, bool)):
        raise SchemaViolation("/label", "expected integer or null")
    try:
        data = np.asarray(obj["data"], dtype=float)
    except (ValueError, TypeError):
        raise SchemaViolation("/data", "ragged or non-numeric tensor") from None
    if data.ndim != 3:
        raise SchemaViolation("/data", f"expected 3-d tensor, got ndim={data.ndim}")
    expect = (obj["frames"], obj["joints"], obj["dims"])
    if data.shape != expect:
        raise SchemaViolation("/data", f"shape {data.shape} != declared {expect}")
    if not np.all(np.isfinite(data)):
        raise SchemaViolation("/data", "contains NaN/Inf")
    return SkeletonSequence(data=data, label=label)


def preprocess(seq: SkeletonSequence, cfg: PreprocessConfig) -> SkeletonSequence:
    """Resample to ``cfg.target_frames`` and center on frame 0.

    Resampling is linear interpolation on normalized time [0, 1]; centering
    translates all frames so that ``cfg.center_joint`` of frame 0 is the
    origin.  A single-frame input is repeated and flagged.
    """
    if cfg.center_joint >= seq.joints:
        raise DimensionMismatch(
            f"center_joint {cfg.center_joint} out of range for V={seq.joints}"
        )
    t_in, n_out = seq.frames, cfg.target_frames
    flags = list(seq.flags)
    if t_in == 1:
        data = np.repeat(seq.data, n_out, axis=0)
        if n_out > 1:
            flags.append("repeated_single_frame")
    else:
        src = np.linspace(0.0, 1.0, t_in)
        dst = np.linspace(0.0, 1.0, n_out) if n_out > 1 else np.array([0.0])
        flat = seq.data.reshape(t_in, -1)
        data = np.empty((n_out, flat.shape[1]))
        for k in range(flat.shape[1]):
            data[:, k] = np.interp(dst, src, flat[:, k])
        data = data.reshape(n_out, seq.joints, seq.dims)
    data = data - data[0, cfg.center_joint]
    return replace(seq, data=data, flags=tuple(flags))


def bone_stream(seq: SkeletonSequence, bones) -> SkeletonSequence:
    """Difference-vector stream: each target joint minus its source joint.

    Rows of the output hold ``x_target - x_source`` for every non-base joint
    and the raw coordinates for the base joint.  ``bones`` is normally a
    :class:`~kinegraph.bones.BoneMatrix`; a raw binary source/target matrix
    (possibly violating the in-degree invariants, e.g. all zeros) is also
    accepted and applied as I - B^T.
    """
    if hasattr(bones, "as_transform"):
        mat = bones.mat
        transform = bones.as_transform()
    else:
        mat = np.asarray(bones)
        transform = np.eye(mat.shape[0]) - mat.T.astype(float)
    if mat.shape != (seq.joints, seq.joints):
        raise DimensionMismatch(
            f"bone matrix is {mat.shape}, sequence has V={seq.joints}"
        )
    data = np.einsum("ij,tjd->tid", transform, seq.data)
    return replace(seq, data=data)


def motion_stream(seq: SkeletonSequence) -> SkeletonSequence:
    """Temporal difference stream: frame t holds x[t+1] - x[t], last frame 0."""
    data = np.zeros_like(seq.data)
    if seq.frames > 1:
        data[:-1] = seq.data[1:] - seq.data[:-1]
    return replace(seq, data=data)
