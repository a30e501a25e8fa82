"""
Quaternion and 3-vector helpers.

Quaternions are stored SCALAR-LAST as numpy arrays ``[x, y, z, w]``, matching
the block form of the kinematic equation used in :mod:`satgail.dynamics`.
Mixing this with scalar-first code is the classic failure mode, so every
function here assumes ``q[3]`` is the scalar part.

Because ``q`` and ``-q`` describe the same rotation, rotations are compared via
rotated vectors or the geodesic angle, never componentwise.
"""
import math

import numpy as np

IDENTITY = np.array([0.0, 0.0, 0.0, 1.0])


def quat_mul(a, b):
    """Hamilton product ``a ⊗ b`` for scalar-last quaternions."""
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array([
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ])


def quat_conj(q):
    return np.array([-q[0], -q[1], -q[2], q[3]])


def normalize(q):
    q = np.asarray(q, dtype=float)
    n = math.sqrt(float(q @ q))
    if n == 0.0 or not math.isfinite(n):
        raise ValueError(f"cannot normalize quaternion {q!r}")
    return q / n


def skew(w):
    """Cross-product matrix: ``skew(w) @ v == np.cross(w, v)``."""
    wx, wy, wz = w
    return np.array([
        [0.0, -wz, wy],
        [wz, 0.0, -wx],
        [-wy, wx, 0.0],
    ])


def axis_angle_to_quat(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    s = math.sin(0.5 * angle)
    return np.array([axis[0] * s, axis[1] * s, axis[2] * s, math.cos(0.5 * angle)])


def euler321_to_quat(roll, pitch, yaw):
    """Quaternion for the 3-2-1 (yaw about z, then pitch about y, then roll
    about x) Euler sequence. Angles in radians.

    Equivalent to ``q_z(yaw) ⊗ q_y(pitch) ⊗ q_x(roll)``, i.e. the rotation
    matrix ``Rz @ Ry @ Rx``.
    """
    cr, sr = math.cos(0.5 * roll), math.sin(0.5 * roll)
    cp, sp = math.cos(0.5 * pitch), math.sin(0.5 * pitch)
    cy, sy = math.cos(0.5 * yaw), math.sin(0.5 * yaw)
    return np.array([
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
        cr * cp * cy + sr * sp * sy,
    ])


def quat_to_matrix(q):
    """Rotation matrix R such that ``rotate_vec(q, v) == R @ v``."""
    x, y, z, w = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def rotate_vec(q, v):
    """Rotate ``v`` by the unit quaternion ``q`` (``q ⊗ v ⊗ q*``).

    Raises ValueError when ``q`` is off the unit sphere by more than 1e-6,
    which means something upstream forgot to renormalize.
    """
    q = np.asarray(q, dtype=float)
    n = math.sqrt(float(q @ q))
    if abs(n - 1.0) > 1e-6:
        raise ValueError(f"rotate_vec needs a unit quaternion, got norm {n:.9g}")
    u = q[:3]
    w = q[3]
    v = np.asarray(v, dtype=float)
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def angle_between(u, v):
    """Angle in [0, pi] between two nonzero vectors.

    Uses ``atan2(|u x v|, u . v)``, which stays accurate near 0 and pi where
    ``acos`` of the normalized dot product loses half its digits.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if not (np.any(u) and np.any(v)):
        raise ValueError("angle_between is undefined for zero-length vectors")
    return math.atan2(float(np.linalg.norm(np.cross(u, v))), float(u @ v))


def quat_angle(q):
    """Rotation angle in [0, pi] encoded by a unit quaternion."""
    return 2.0 * math.atan2(float(np.linalg.norm(q[:3])), abs(float(q[3])))


def geodesic_angle(a, b):
    """Smallest rotation angle taking attitude ``a`` to attitude ``b``."""
    return quat_angle(quat_mul(b, quat_conj(a)))


def random_unit_quat(rng):
    """Uniformly distributed rotation (Shoemake's subgroup algorithm)."""
    u1, u2, u3 = rng.random(3)
    a = math.sqrt(1.0 - u1)
    b = math.sqrt(u1)
    return np.array([
        a * math.sin(2 * math.pi * u2),
        a * math.cos(2 * math.pi * u2),
        b * math.sin(2 * math.pi * u3),
        b * math.cos(2 * math.pi * u3),
    ])
