"""Rigid-body transform algebra, rotation parameterizations, and pose interpolation.

Conventions used throughout the package:
  * rotations are 3x3 orthonormal matrices with det +1, float64
  * a RigidTransform maps points from its source frame into its parent frame,
    p_parent = R @ p_source + t
  * Euler angles follow the ZYX convention, R = Rz(yaw) @ Ry(pitch) @ Rx(roll)
  * tangent vectors carry (rotation axis-angle, translation) in that order
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_ORTHO_TOL = 1e-9
_SMALL_ANGLE = 1e-8
_NEAR_PI = np.pi - 1e-6
_GIMBAL_TOL = 1e-6


class OutOfRange(Exception):
    """Query timestamp falls outside the trajectory span."""


class NearPiRotation(Exception):
    """log() of a rotation whose angle is within 1e-6 of pi."""


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).reshape(3)
    return a


def rotation_drift(rotation: np.ndarray) -> float:
    """Max deviation of R from orthonormality: entries of R^T R - I and |det - 1|."""
    r = np.asarray(rotation, dtype=np.float64)
    ortho = np.abs(r.T @ r - np.eye(3)).max()
    det = abs(np.linalg.det(r) - 1.0)
    return max(ortho, det)


def orthonormalize(rotation: np.ndarray) -> np.ndarray:
    """Project a near-rotation matrix onto SO(3) via SVD."""
    u, _, vt = np.linalg.svd(np.asarray(rotation, dtype=np.float64))
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) pose or extrinsic, stored as rotation matrix + translation vector."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = _as_vec3(self.translation)
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(m) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64).reshape(4, 4)
        return RigidTransform(m[:3, :3], m[:3, 3])

    def to_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or a batch (N, 3)."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation


@dataclass(frozen=True)
class EulerZYX:
    """Roll/pitch/yaw in radians; rotation composes as Rz(yaw) Ry(pitch) Rx(roll).

    gimbal_lock is set when |pitch| is within 1e-6 of pi/2, in which case
    roll is fixed to 0 and yaw absorbs the free angle.
    """

    roll: float
    pitch: float
    yaw: float
    gimbal_lock: bool = field(default=False, compare=False)


@dataclass(frozen=True)
class TangentVector:
    """Minimal 6-DoF parameterization: axis-angle rotation part + translation part."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _as_vec3(self.rotation))
        object.__setattr__(self, "translation", _as_vec3(self.translation))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.rotation, self.translation])

    @staticmethod
    def from_array(v) -> "TangentVector":
        v = np.asarray(v, dtype=np.float64).reshape(6)
        return TangentVector(v[:3], v[3:])


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """a then-applied-after b: result maps p -> a(b(p))."""
    r = a.rotation @ b.rotation
    t = a.rotation @ b.translation + a.translation
    if rotation_drift(r) > _ORTHO_TOL:
        r = orthonormalize(r)
    return RigidTransform(r, t)


def invert(t: RigidTransform) -> RigidTransform:
    r_inv = t.rotation.T
    return RigidTransform(r_inv, -(r_inv @ t.translation))


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_exp(omega: np.ndarray) -> np.ndarray:
    """Rodrigues formula with a series branch below the small-angle cutoff."""
    omega = _as_vec3(omega)
    theta = float(np.linalg.norm(omega))
    k = skew(omega)
    k2 = k @ k
    if theta < _SMALL_ANGLE:
        return np.eye(3) + k + 0.5 * k2
    s = np.sin(theta) / theta
    c = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + s * k + c * k2


def so3_log(rotation: np.ndarray) -> np.ndarray:
    """Axis-angle of a rotation matrix. Raises NearPiRotation at angle >= pi - 1e-6."""
    r = np.asarray(rotation, dtype=np.float64)
    cos_theta = np.clip(0.5 * (np.trace(r) - 1.0), -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    if theta >= _NEAR_PI:
        raise NearPiRotation(f"rotation angle {theta:.9f} within 1e-6 of pi")
    vee = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if theta < _SMALL_ANGLE:
        return vee
    return vee * theta / np.sin(theta)


def _so3_left_jacobian(omega: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(omega))
    k = skew(omega)
    k2 = k @ k
    if theta < _SMALL_ANGLE:
        return np.eye(3) + 0.5 * k + k2 / 6.0
    t2 = theta * theta
    a = (1.0 - np.cos(theta)) / t2
    b = (theta - np.sin(theta)) / (t2 * theta)
    return np.eye(3) + a * k + b * k2


def _so3_left_jacobian_inv(omega: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(omega))
    k = skew(omega)
    k2 = k @ k
    if theta < _SMALL_ANGLE:
        return np.eye(3) - 0.5 * k + k2 / 12.0
    half = 0.5 * theta
    cot = half / np.tan(half)
    coeff = (1.0 - cot) / (theta * theta)
    return np.eye(3) - 0.5 * k + coeff * k2


def exp(v: TangentVector) -> RigidTransform:
    """SE(3) exponential map of a tangent vector."""
    r = so3_exp(v.rotation)
    t = _so3_left_jacobian(v.rotation) @ v.translation
    return RigidTransform(r, t)


def log(t: RigidTransform) -> TangentVector:
    """SE(3) logarithm. Raises NearPiRotation when the rotation angle >= pi - 1e-6."""
    omega = so3_log(t.rotation)
    rho = _so3_left_jacobian_inv(omega) @ t.translation
    return TangentVector(omega, rho)


def euler_zyx_to_rotation(e: EulerZYX) -> np.ndarray:
    cr, sr = np.cos(e.roll), np.sin(e.roll)
    cp, sp = np.cos(e.pitch), np.sin(e.pitch)
    cy, sy = np.cos(e.yaw), np.sin(e.yaw)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return rz @ ry @ rx


def rotation_to_euler_zyx(rotation: np.ndarray) -> EulerZYX:
    """Extract ZYX Euler angles. At gimbal lock roll := 0 and yaw absorbs the rest."""
    r = np.asarray(rotation, dtype=np.float64)
    sp = -r[2, 0]
    sp = float(np.clip(sp, -1.0, 1.0))
    pitch = float(np.arcsin(sp))
    if np.pi / 2 - abs(pitch) < _GIMBAL_TOL:
        # with roll folded into yaw, r[0,1] = -sin(yaw) and r[1,1] = cos(yaw)
        yaw = float(np.arctan2(-r[0, 1], r[1, 1]))
        return EulerZYX(0.0, pitch, yaw, gimbal_lock=True)
    yaw = float(np.arctan2(r[1, 0], r[0, 0]))
    roll = float(np.arctan2(r[2, 1], r[2, 2]))
    return EulerZYX(roll, pitch, yaw)


# ---------------------------------------------------------------------------
# batched SO(3) helpers, used by trajectory interpolation and the simulator


def so3_exp_batch(omegas: np.ndarray) -> np.ndarray:
    """Rodrigues formula over an (N, 3) stack of axis-angle vectors."""
    omegas = np.asarray(omegas, dtype=np.float64).reshape(-1, 3)
    theta = np.linalg.norm(omegas, axis=1)
    small = theta < _SMALL_ANGLE
    theta_safe = np.where(small, 1.0, theta)
    s = np.where(small, 1.0 - theta**2 / 6.0, np.sin(theta_safe) / theta_safe)
    c = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(theta_safe)) / theta_safe**2)
    wx, wy, wz = omegas[:, 0], omegas[:, 1], omegas[:, 2]
    zeros = np.zeros_like(wx)
    k = np.stack(
        [zeros, -wz, wy, wz, zeros, -wx, -wy, wx, zeros], axis=1
    ).reshape(-1, 3, 3)
    k2 = k @ k
    return np.eye(3) + s[:, None, None] * k + c[:, None, None] * k2


def so3_log_batch(rotations: np.ndarray) -> np.ndarray:
    """Axis-angle of an (N, 3, 3) stack. Near-pi entries use the diagonal method."""
    rs = np.asarray(rotations, dtype=np.float64).reshape(-1, 3, 3)
    trace = np.einsum("nii->n", rs)
    cos_theta = np.clip(0.5 * (trace - 1.0), -1.0, 1.0)
    theta = np.arccos(cos_theta)
    vee = 0.5 * np.stack(
        [
            rs[:, 2, 1] - rs[:, 1, 2],
            rs[:, 0, 2] - rs[:, 2, 0],
            rs[:, 1, 0] - rs[:, 0, 1],
        ],
        axis=1,
    )
    small = theta < _SMALL_ANGLE
    near_pi = theta >= _NEAR_PI
    sin_safe = np.where(small | near_pi, 1.0, np.sin(theta))
    scale = np.where(small, 1.0, theta / sin_safe)
    out = vee * scale[:, None]
    if near_pi.any():
        for i in np.nonzero(near_pi)[0]:
            out[i] = _log_near_pi(rs[i], theta[i])
    return out


def _log_near_pi(r: np.ndarray, theta: float) -> np.ndarray:
    diag = np.diag(r)
    k = int(np.argmax(diag))
    axis = np.zeros(3)
    axis[k] = np.sqrt(max(0.0, (diag[k] + 1.0) * 0.5))
    others = [i for i in range(3) if i != k]
    for j in others:
        axis[j] = (r[k, j] + r[j, k]) / (4.0 * axis[k])
    axis /= np.linalg.norm(axis)
    return axis * theta


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class TrajectorySample:
    timestamp: float
    pose: RigidTransform


class Trajectory:
    """Timestamped world-frame pose sequence with strictly increasing timestamps."""

    def __init__(self, timestamps, rotations, translations):
        ts = np.asarray(timestamps, dtype=np.float64).reshape(-1)
        rs = np.asarray(rotations, dtype=np.float64).reshape(-1, 3, 3)
        trs = np.asarray(translations, dtype=np.float64).reshape(-1, 3)
        if not (len(ts) == len(rs) == len(trs)):
            raise ValueError("timestamps, rotations, translations length mismatch")
        if len(ts) >= 2 and not (np.diff(ts) > 0).all():
            raise ValueError("trajectory timestamps must be strictly increasing")
        ts.setflags(write=False)
        rs.setflags(write=False)
        trs.setflags(write=False)
        self.timestamps = ts
        self.rotations = rs
        self.translations = trs

    @staticmethod
    def from_samples(samples) -> "Trajectory":
        return Trajectory(
            [s.timestamp for s in samples],
            [s.pose.rotation for s in samples],
            [s.pose.translation for s in samples],
        )

    def __len__(self) -> int:
        return len(self.timestamps)

    def sample(self, i: int) -> TrajectorySample:
        return TrajectorySample(
            float(self.timestamps[i]),
            RigidTransform(self.rotations[i], self.translations[i]),
        )

    @property
    def start(self) -> float:
        return float(self.timestamps[0])

    @property
    def end(self) -> float:
        return float(self.timestamps[-1])

    def covers(self, t_min: float, t_max: float) -> bool:
        return self.start <= t_min and t_max <= self.end

    def poses_at(self, times) -> tuple[np.ndarray, np.ndarray]:
        """Interpolated poses at a batch of query times.

        Translation is interpolated linearly, rotation along the geodesic
        between the bracketing samples. Queries that hit a stored timestamp
        return the stored pose bit-exact. Raises OutOfRange if any query
        falls outside [start, end].
        """
        times = np.asarray(times, dtype=np.float64).reshape(-1)
        if len(self.timestamps) < 2:
            raise OutOfRange("trajectory needs at least 2 samples")
        ts = self.timestamps
        if (times < ts[0]).any() or (times > ts[-1]).any():
            bad = int(((times < ts[0]) | (times > ts[-1])).sum())
            raise OutOfRange(
                f"{bad} query time(s) outside trajectory span [{ts[0]}, {ts[-1]}]"
            )
        idx = np.clip(np.searchsorted(ts, times, side="right") - 1, 0, len(ts) - 2)
        t0 = ts[idx]
        t1 = ts[idx + 1]
        u = (times - t0) / (t1 - t0)

        trans = self.translations[idx] * (1.0 - u[:, None]) + self.translations[idx + 1] * u[:, None]
        r0 = self.rotations[idx]
        r1 = self.rotations[idx + 1]
        omega = so3_log_batch(np.transpose(r0, (0, 2, 1)) @ r1)
        rots = r0 @ so3_exp_batch(omega * u[:, None])

        # exact stored poses at exact sample hits
        pos = np.searchsorted(ts, times)
        pos_c = np.clip(pos, 0, len(ts) - 1)
        exact = ts[pos_c] == times
        if exact.any():
            rots[exact] = self.rotations[pos_c[exact]]
            trans[exact] = self.translations[pos_c[exact]]
        return rots, trans


def interpolate_pose(traj: Trajectory, query: float) -> RigidTransform:
    """Pose at a single query time; see Trajectory.poses_at for semantics."""
    rots, trans = traj.poses_at([query])
    return RigidTransform(rots[0], trans[0])
