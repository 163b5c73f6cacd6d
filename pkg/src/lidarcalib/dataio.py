"""On-disk artifacts: LiDAR frames, pose trajectories, fiducials, calibration results.

Frame format (binary, bit-exact round trip):
    magic "LPCF" | version u16 LE | frame_timestamp f64 LE | point count u32 LE |
    per point five f32 LE: x, y, z, intensity, relative_time

ASCII twin: header line ``# LPCF-ASCII v1 timestamp=<f64>`` followed by one
space-separated row per point (round trip within 1e-6 m).

Trajectory: CSV with header ``timestamp,tx,ty,tz,qx,qy,qz,qw`` (scalar-last
quaternion). Fiducials: CSV ``x,y,z`` with at least 3 rows.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import RigidTransform, Trajectory, rotation_to_euler_zyx

MAGIC = b"LPCF"
FORMAT_VERSION = 1
ASCII_HEADER_PREFIX = "# LPCF-ASCII v1 timestamp="
MAX_RELATIVE_TIME = 0.2  # one scan period upper bound, seconds


class ParseError(Exception):
    """Malformed frame file; message carries the offending line or byte offset."""


class SchemaError(Exception):
    """File parsed but required columns/fields are missing."""


class NonMonotonicTimestamps(Exception):
    pass


class InvalidQuaternion(Exception):
    pass


class TooFewFiducials(Exception):
    pass


class EmptyOverlap(Exception):
    """No LiDAR frame falls inside the trajectory span."""


@dataclass(frozen=True)
class LidarPoint:
    position: np.ndarray
    intensity: float
    relative_time: float


@dataclass
class LidarFrame:
    """One scan: per-point positions/intensities/relative times plus a start timestamp.

    positions are float32 (N, 3) in the sensor frame; relative_time is the
    per-point offset from frame_timestamp in seconds, within [0, 0.2).
    """

    frame_timestamp: float
    positions: np.ndarray
    intensities: np.ndarray
    relative_times: np.ndarray

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float32).reshape(-1, 3)
        self.intensities = np.ascontiguousarray(self.intensities, dtype=np.float32).reshape(-1)
        self.relative_times = np.ascontiguousarray(self.relative_times, dtype=np.float32).reshape(-1)
        n = len(self.positions)
        if len(self.intensities) != n or len(self.relative_times) != n:
            raise ValueError("per-point arrays disagree on point count")
        if n and not np.isfinite(self.positions).all():
            raise ValueError("non-finite point position")
        if n and ((self.relative_times < 0).any() or (self.relative_times >= MAX_RELATIVE_TIME).any()):
            raise ValueError("relative_time outside [0, 0.2)")

    def __len__(self) -> int:
        return len(self.positions)

    def point(self, i: int) -> LidarPoint:
        return LidarPoint(
            self.positions[i].astype(np.float64),
            float(self.intensities[i]),
            float(self.relative_times[i]),
        )


@dataclass(frozen=True)
class FiducialPoint:
    """Surveyed world-frame ground point used for the z-axis correction stage."""

    position: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.position, dtype=np.float64).reshape(3)
        if not np.isfinite(p).all():
            raise ValueError("fiducial position must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "position", p)


STAGES = ("rough", "refined", "z_corrected")


@dataclass
class CalibrationResult:
    """Per-stage calibration output; later stages link their parent result."""

    extrinsic: RigidTransform
    stage: str
    diagnostics: dict = field(default_factory=dict)
    runtime_seconds: float = 0.0
    parent: "CalibrationResult | None" = None

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        rank = STAGES.index(self.stage)
        if rank > 0 and self.parent is not None:
            if STAGES.index(self.parent.stage) != rank - 1:
                raise ValueError(
                    f"{self.stage} result must chain a {STAGES[rank - 1]} parent"
                )

    def to_json_dict(self) -> dict:
        """Result schema used by the CLI; excludes wall-clock time for determinism."""
        e = rotation_to_euler_zyx(self.extrinsic.rotation)
        return {
            "extrinsic": [float(v) for v in self.extrinsic.to_matrix().reshape(-1)],
            "euler_zyx_deg": [np.degrees(e.roll), np.degrees(e.pitch), np.degrees(e.yaw)],
            "translation_m": [float(v) for v in self.extrinsic.translation],
            "stage": self.stage,
            "diagnostics": self.diagnostics,
        }


def extrinsic_from_json_dict(doc: dict) -> RigidTransform:
    if "extrinsic" not in doc:
        raise SchemaError("missing 'extrinsic' field")
    m = np.asarray(doc["extrinsic"], dtype=np.float64)
    if m.size != 16:
        raise SchemaError("'extrinsic' must hold 16 row-major numbers")
    return RigidTransform.from_matrix(m.reshape(4, 4))


def load_extrinsic_json(path) -> RigidTransform:
    with open(path) as f:
        return extrinsic_from_json_dict(json.load(f))


# ---------------------------------------------------------------------------
# frame files

_HEADER = struct.Struct("<4sHdI")


def write_frame(frame: LidarFrame, path) -> None:
    rec = np.empty((len(frame), 5), dtype="<f4")
    rec[:, :3] = frame.positions
    rec[:, 3] = frame.intensities
    rec[:, 4] = frame.relative_times
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, FORMAT_VERSION, frame.frame_timestamp, len(frame)))
        f.write(rec.tobytes())


def read_frame(path) -> LidarFrame:
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(4)
        if head == MAGIC:
            rest = f.read(_HEADER.size - 4)
            if len(rest) != _HEADER.size - 4:
                raise ParseError(f"{path}: truncated header at byte {4 + len(rest)}")
            _, version, ts, count = _HEADER.unpack(head + rest)
            if version != FORMAT_VERSION:
                raise SchemaError(f"{path}: unsupported format version {version}")
            if count == 0:
                raise ParseError(f"{path}: empty frame")
            body = f.read(count * 20)
            if len(body) != count * 20:
                raise ParseError(
                    f"{path}: expected {count * 20} payload bytes, got {len(body)}"
                )
            rec = np.frombuffer(body, dtype="<f4").reshape(count, 5)
            return LidarFrame(ts, rec[:, :3], rec[:, 3], rec[:, 4])
    return _read_frame_ascii(path)


def _read_frame_ascii(path: Path) -> LidarFrame:
    with open(path, "r") as f:
        header = f.readline().rstrip("\n")
        if not header.startswith(ASCII_HEADER_PREFIX):
            raise ParseError(f"{path}: line 1: not an LPCF file (bad magic/header)")
        try:
            ts = float(header[len(ASCII_HEADER_PREFIX):])
        except ValueError:
            raise ParseError(f"{path}: line 1: bad timestamp in header") from None
        rows = []
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise SchemaError(
                    f"{path}: line {lineno}: expected 5 columns (x y z intensity rel_time), got {len(parts)}"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: non-numeric value") from None
    if not rows:
        raise ParseError(f"{path}: empty frame")
    arr = np.asarray(rows, dtype=np.float64)
    return LidarFrame(ts, arr[:, :3], arr[:, 3], arr[:, 4])


def write_frame_ascii(frame: LidarFrame, path) -> None:
    with open(path, "w") as f:
        f.write(f"{ASCII_HEADER_PREFIX}{float(frame.frame_timestamp)!r}\n")
        for i in range(len(frame)):
            x, y, z = frame.positions[i]
            f.write(
                f"{x:.9g} {y:.9g} {z:.9g} {frame.intensities[i]:.9g} {frame.relative_times[i]:.9g}\n"
            )


def read_frame_directory(dirpath, pattern: str = "*.lpcf") -> list[LidarFrame]:
    """All frames under a directory, sorted by filename; enforces strictly
    increasing frame timestamps across the sequence."""
    paths = sorted(Path(dirpath).glob(pattern))
    if not paths:
        raise ParseError(f"no {pattern} files under {dirpath}")
    frames = [read_frame(p) for p in paths]
    ts = np.array([f.frame_timestamp for f in frames])
    if len(ts) >= 2 and not (np.diff(ts) > 0).all():
        raise NonMonotonicTimestamps(f"frame timestamps not strictly increasing in {dirpath}")
    return frames


# ---------------------------------------------------------------------------
# trajectories

_TRAJ_COLUMNS = ["timestamp", "tx", "ty", "tz", "qx", "qy", "qz", "qw"]


def _quat_to_rotation(q: np.ndarray) -> np.ndarray:
    # scalar-last (x, y, z, w), assumed normalized
    x, y, z, w = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def _rotation_to_quat(r: np.ndarray) -> np.ndarray:
    # Shepperd's method, returns scalar-last
    t = np.trace(r)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        w = 0.25 * s
        x = (r[2, 1] - r[1, 2]) / s
        y = (r[0, 2] - r[2, 0]) / s
        z = (r[1, 0] - r[0, 1]) / s
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2
        w = (r[2, 1] - r[1, 2]) / s
        x = 0.25 * s
        y = (r[0, 1] + r[1, 0]) / s
        z = (r[0, 2] + r[2, 0]) / s
    elif r[1, 1] > r[2, 2]:
        s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2
        w = (r[0, 2] - r[2, 0]) / s
        x = (r[0, 1] + r[1, 0]) / s
        y = 0.25 * s
        z = (r[1, 2] + r[2, 1]) / s
    else:
        s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2
        w = (r[1, 0] - r[0, 1]) / s
        x = (r[0, 2] + r[2, 0]) / s
        y = (r[1, 2] + r[2, 1]) / s
        z = 0.25 * s
    q = np.array([x, y, z, w])
    return q / np.linalg.norm(q)


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    with open(path) as f:
        header = f.readline().strip()
        cols = [c.strip() for c in header.split(",")]
        if cols != _TRAJ_COLUMNS:
            raise SchemaError(
                f"{path}: expected header {','.join(_TRAJ_COLUMNS)}, got {header!r}"
            )
        rows = []
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 8:
                raise SchemaError(f"{path}: line {lineno}: expected 8 fields")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: non-numeric value") from None
    if len(rows) < 2:
        raise ParseError(f"{path}: trajectory needs at least 2 samples")
    arr = np.asarray(rows)
    ts = arr[:, 0]
    if not (np.diff(ts) > 0).all():
        raise NonMonotonicTimestamps(f"{path}: timestamps not strictly increasing")
    quats = arr[:, 4:8]
    norms = np.linalg.norm(quats, axis=1)
    if (norms < 0.99).any() or (norms > 1.01).any():
        bad = int(np.argmax((norms < 0.99) | (norms > 1.01)))
        raise InvalidQuaternion(f"{path}: row {bad + 2}: quaternion norm {norms[bad]:.4f}")
    quats = quats / norms[:, None]
    rotations = np.stack([_quat_to_rotation(q) for q in quats])
    return Trajectory(ts, rotations, arr[:, 1:4])


def write_trajectory(traj: Trajectory, path) -> None:
    with open(path, "w") as f:
        f.write(",".join(_TRAJ_COLUMNS) + "\n")
        for i in range(len(traj)):
            q = _rotation_to_quat(traj.rotations[i])
            t = traj.translations[i]
            vals = [traj.timestamps[i], t[0], t[1], t[2], q[0], q[1], q[2], q[3]]
            f.write(",".join(repr(float(v)) for v in vals) + "\n")


# ---------------------------------------------------------------------------
# fiducials


def read_fiducials(path) -> list[FiducialPoint]:
    path = Path(path)
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if lineno == 1 and parts == ["x", "y", "z"]:
                continue
            if len(parts) != 3:
                raise SchemaError(f"{path}: line {lineno}: expected 3 fields (x,y,z)")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: non-numeric value") from None
    if len(rows) < 3:
        raise TooFewFiducials(f"{path}: {len(rows)} fiducials, need at least 3")
    return [FiducialPoint(r) for r in rows]


def write_fiducials(points, path) -> None:
    with open(path, "w") as f:
        f.write("x,y,z\n")
        for p in points:
            pos = p.position if isinstance(p, FiducialPoint) else np.asarray(p, dtype=np.float64)
            f.write(f"{float(pos[0])!r},{float(pos[1])!r},{float(pos[2])!r}\n")


# ---------------------------------------------------------------------------
# association


@dataclass
class AssociatedFrames:
    """Frames paired with interpolated poses; drops outside the trajectory span
    are counted, never silent."""

    frames: list[LidarFrame]
    rotations: np.ndarray  # (N, 3, 3) pose-sensor rotations at frame timestamps
    translations: np.ndarray  # (N, 3)
    dropped: int

    def __len__(self) -> int:
        return len(self.frames)

    def pose(self, i: int) -> RigidTransform:
        return RigidTransform(self.rotations[i], self.translations[i])


def associate_frames_with_poses(frames, traj: Trajectory) -> AssociatedFrames:
    ts = np.array([f.frame_timestamp for f in frames])
    inside = (ts >= traj.start) & (ts <= traj.end)
    dropped = int((~inside).sum())
    kept = [f for f, ok in zip(frames, inside) if ok]
    if not kept:
        raise EmptyOverlap(
            f"no frame timestamp inside trajectory span [{traj.start}, {traj.end}]"
        )
    rots, trans = traj.poses_at(ts[inside])
    return AssociatedFrames(kept, rots, trans, dropped)
