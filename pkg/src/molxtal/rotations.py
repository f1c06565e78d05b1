"""Rotation-vector (axis * angle) utilities.

Rotation vectors are converted with the Rodrigues formula, written as

    R = I + A(t) K + B(t) K @ K,   K = skew(v), t = |v|

with A = sin(t)/t and B = (1 - cos(t))/t**2. Both coefficients are smooth in
t**2, so a Taylor series takes over near the identity; the same form gives a
cheap closed-form Jacobian dR/dv.
"""

import numpy as np
from scipy.spatial.transform import Rotation

SERIES_THRESHOLD = 1e-4
_JACOBIAN_SERIES_THRESHOLD = 1e-2


def skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _coefficients(t):
    if t < SERIES_THRESHOLD:
        t2 = t * t
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0
    return np.sin(t) / t, (1.0 - np.cos(t)) / (t * t)


def _coefficient_derivatives(t):
    """(dA/dt)/t and (dB/dt)/t."""
    t2 = t * t
    if t < _JACOBIAN_SERIES_THRESHOLD:
        da = -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0
        db = -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0
        return da, db
    s, c = np.sin(t), np.cos(t)
    return (t * c - s) / (t2 * t), (t * s - 2.0 * (1.0 - c)) / (t2 * t2)


def rotvec_to_matrix(v):
    v = np.asarray(v, dtype=float)
    a, b = _coefficients(float(np.linalg.norm(v)))
    k = skew(v)
    return np.eye(3) + a * k + b * (k @ k)


def rotvec_jacobian(v):
    """Return dR/dv as an array of shape (3, 3, 3), indexed [i] -> dR/dv_i."""
    v = np.asarray(v, dtype=float)
    t = float(np.linalg.norm(v))
    a, b = _coefficients(t)
    da, db = _coefficient_derivatives(t)
    k = skew(v)
    k2 = k @ k
    out = np.empty((3, 3, 3))
    for i in range(3):
        e = skew(np.eye(3)[i])
        out[i] = a * e + b * (e @ k + k @ e) + v[i] * (da * k + db * k2)
    return out


def matrix_to_rotvec(matrix):
    return canonical_rotvec(Rotation.from_matrix(matrix).as_rotvec())


def canonical_rotvec(v):
    """Representative of the same rotation with norm in [0, pi]."""
    v = np.asarray(v, dtype=float)
    t = float(np.linalg.norm(v))
    if t <= np.pi:
        return v.copy()
    reduced = np.mod(t, 2.0 * np.pi)
    if reduced > np.pi:
        reduced -= 2.0 * np.pi
    return v * (reduced / t)


def random_rotvec(rng):
    """Uniformly distributed rotation, drawn as a random unit quaternion."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, xyz = q[0], q[1:]
    if w < 0:
        w, xyz = -w, -xyz
    sin_half = np.linalg.norm(xyz)
    if sin_half < 1e-15:
        return np.zeros(3)
    angle = 2.0 * np.arctan2(sin_half, w)
    return xyz / sin_half * angle


def nearest_proper_rotation(matrix):
    """Project a 3x3 matrix onto SO(3) by SVD."""
    u, _, vt = np.linalg.svd(matrix)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt
