"""Integer-grid storage and double-precision vector algebra.

Positions and region centres persist on a fixed-point grid: each
millimetre value is scaled by an integer factor S and rounded to an int
(0.01 mm grid at the default S=100). All intermediate geometry runs on
plain floats; results are re-quantized only when they become part of
the persisted, comparable state.
"""

from __future__ import annotations

import math

Vec3 = tuple[float, float, float]
IVec3 = tuple[int, int, int]
Mat3 = tuple[Vec3, Vec3, Vec3]

#: storage must fit a 32-bit signed int, like a plain C declaration would
INT_LIMIT = 2**31 - 1

DEFAULT_SCALE = 100


class QuantizeRangeError(ValueError):
    """A component does not fit the integer storage range at this scale."""


class DegenerateVectorError(ValueError):
    """A vector is too close to zero (or non-finite) for the operation."""


def _round_half_away(x: float) -> int:
    # ties round away from zero, fixed for cross-run reproducibility
    return math.floor(x + 0.5) if x >= 0.0 else math.ceil(x - 0.5)


def quantize(v: Vec3, scale: int) -> IVec3:
    """Map a millimetre vector onto the integer grid (ties away from zero)."""
    if scale < 1:
        raise ValueError(f"scale must be a positive integer, got {scale}")
    out = []
    for c in v:
        if not math.isfinite(c):
            raise DegenerateVectorError(f"non-finite component {c!r}")
        s = c * scale
        if abs(s) > INT_LIMIT:
            raise QuantizeRangeError(
                f"component {c} mm at scale {scale} exceeds the integer range"
            )
        out.append(_round_half_away(s))
    return (out[0], out[1], out[2])


def unquantize(v: IVec3, scale: int) -> Vec3:
    """Grid coordinates back to millimetres. quantize(unquantize(v)) == v."""
    return (v[0] / scale, v[1] / scale, v[2] / scale)


def vadd(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def vsub(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def vmul(a: Vec3, s: float) -> Vec3:
    return (a[0] * s, a[1] * s, a[2] * s)


def dot(a: Vec3, b: Vec3) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def cross(a: Vec3, b: Vec3) -> Vec3:
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def norm(a: Vec3) -> float:
    return math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])


def dist(a: Vec3, b: Vec3) -> float:
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    dz = a[2] - b[2]
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def normalize(a: Vec3) -> Vec3:
    n = norm(a)
    if not math.isfinite(n) or n <= 1e-12:
        raise DegenerateVectorError(f"cannot normalize near-zero vector {a!r}")
    return (a[0] / n, a[1] / n, a[2] / n)


def rotate_about_axis(v: Vec3, axis: Vec3, angle_rad: float) -> Vec3:
    """Right-handed rotation of v about a unit axis (Rodrigues form)."""
    if abs(norm(axis) - 1.0) > 1e-9:
        raise ValueError(f"rotation axis must be unit length, got {axis!r}")
    c = math.cos(angle_rad)
    s = math.sin(angle_rad)
    k = axis
    kxv = cross(k, v)
    kdv = dot(k, v)
    t = kdv * (1.0 - c)
    return (
        v[0] * c + kxv[0] * s + k[0] * t,
        v[1] * c + kxv[1] * s + k[1] * t,
        v[2] * c + kxv[2] * s + k[2] * t,
    )


def rotation_matrix(axis: Vec3, angle_rad: float) -> Mat3:
    """Row-major rotation matrix for `rotate_about_axis` (same convention)."""
    ex = rotate_about_axis((1.0, 0.0, 0.0), axis, angle_rad)
    ey = rotate_about_axis((0.0, 1.0, 0.0), axis, angle_rad)
    ez = rotate_about_axis((0.0, 0.0, 1.0), axis, angle_rad)
    # columns are rotated basis vectors
    return (
        (ex[0], ey[0], ez[0]),
        (ex[1], ey[1], ez[1]),
        (ex[2], ey[2], ez[2]),
    )


def mat_vec(m: Mat3, v: Vec3) -> Vec3:
    return (
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    )


def is_rotation(m: Mat3, tol: float = 1e-9) -> bool:
    """True iff m is orthonormal with determinant +1 within tol."""
    rows = m
    for i in range(3):
        for j in range(3):
            expect = 1.0 if i == j else 0.0
            if abs(dot(rows[i], rows[j]) - expect) > tol:
                return False
    det = dot(rows[0], cross(rows[1], rows[2]))
    return abs(det - 1.0) <= tol


def orthonormal_frame(tangent: Vec3, normal: Vec3) -> tuple[Vec3, Vec3]:
    """Gram-Schmidt cleanup: unit tangent, unit normal orthogonal to it."""
    t = normalize(tangent)
    d = dot(normal, t)
    n = (normal[0] - d * t[0], normal[1] - d * t[1], normal[2] - d * t[2])
    return t, normalize(n)
