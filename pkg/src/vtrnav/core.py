"""Planar geometry primitives and descriptor math shared across the stack."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Wrap an angle in radians into (-pi, pi]."""
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta!r}")
    wrapped = math.remainder(theta, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


@dataclass(frozen=True)
class Pose2:
    """Planar pose: position in meters, heading in radians CCW from +x.

    The heading is wrapped into (-pi, pi] on construction.
    """

    x: float
    y: float
    psi: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("pose position must be finite")
        object.__setattr__(self, "psi", normalize_angle(self.psi))


@dataclass(frozen=True)
class RelPose2:
    """Relative planar pose expressed in the source frame: [dx, dy, dpsi]."""

    dx: float
    dy: float
    dpsi: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.dx) and math.isfinite(self.dy)):
            raise ValueError("relative pose translation must be finite")
        object.__setattr__(self, "dpsi", normalize_angle(self.dpsi))


@dataclass(frozen=True)
class Twist:
    """Unicycle command: forward speed v (m/s) and yaw rate w (rad/s)."""

    v: float
    w: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.v) and math.isfinite(self.w)):
            raise ValueError("twist components must be finite")


def compose_se2(a: Pose2, rel: RelPose2) -> Pose2:
    """Apply a relative pose expressed in a's frame to a."""
    c = math.cos(a.psi)
    s = math.sin(a.psi)
    return Pose2(
        a.x + c * rel.dx - s * rel.dy,
        a.y + s * rel.dx + c * rel.dy,
        a.psi + rel.dpsi,
    )


def relative_se2(a: Pose2, b: Pose2) -> RelPose2:
    """Express pose b in the frame of pose a."""
    c = math.cos(a.psi)
    s = math.sin(a.psi)
    ex = b.x - a.x
    ey = b.y - a.y
    return RelPose2(c * ex + s * ey, -s * ex + c * ey, b.psi - a.psi)


class Descriptor:
    """Unit-norm embedding vector compared by cosine similarity.

    Vectors are L2-normalized at construction, so similarity is a plain
    dot product.
    """

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray) -> None:
        vec = np.asarray(values, dtype=np.float64)
        if vec.ndim != 1 or vec.size == 0:
            raise ValueError("descriptor must be a non-empty 1-D vector")
        if not np.all(np.isfinite(vec)):
            raise ValueError("descriptor values must be finite")
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise ValueError("cannot normalize a zero descriptor")
        vec = vec / norm
        vec.setflags(write=False)
        object.__setattr__(self, "values", vec)

    @classmethod
    def from_normalized(cls, values: np.ndarray) -> "Descriptor":
        """Wrap an already unit-norm vector without renormalizing it.

        Used when decoding stored descriptors so a decode/encode round trip
        is bit-identical. The norm must be within 1e-6 of 1.
        """
        vec = np.asarray(values, dtype=np.float64)
        if vec.ndim != 1 or vec.size == 0:
            raise ValueError("descriptor must be a non-empty 1-D vector")
        if not np.all(np.isfinite(vec)):
            raise ValueError("descriptor values must be finite")
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"descriptor norm {norm!r} outside unit tolerance")
        obj = cls.__new__(cls)
        vec = vec.copy()
        vec.setflags(write=False)
        object.__setattr__(obj, "values", vec)
        return obj

    def __setattr__(self, name: str, value) -> None:
        raise AttributeError("Descriptor is immutable")

    @property
    def dim(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Descriptor):
            return NotImplemented
        return bool(np.array_equal(self.values, other.values))

    def __repr__(self) -> str:
        return f"Descriptor(dim={self.dim})"


def cosine_similarity(a: Descriptor, b: Descriptor) -> float:
    """Cosine similarity of two descriptors, clamped into [-1, 1]."""
    if a.dim != b.dim:
        raise ValueError(f"descriptor dimensions differ: {a.dim} != {b.dim}")
    return float(np.clip(np.dot(a.values, b.values), -1.0, 1.0))


class Transform3:
    """Rigid 3-D transform with a validated rotation matrix.

    The rotation must be orthonormal (max abs entry of R^T R - I within
    1e-6) with determinant within 1e-6 of 1.
    """

    __slots__ = ("rotation", "translation")

    ORTHONORMAL_TOL = 1e-6

    def __init__(self, rotation: np.ndarray, translation: np.ndarray) -> None:
        rot = np.asarray(rotation, dtype=np.float64)
        tra = np.asarray(translation, dtype=np.float64)
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rot.shape}")
        if tra.shape != (3,):
            raise ValueError(f"translation must have 3 entries, got {tra.shape}")
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(tra))):
            raise ValueError("transform entries must be finite")
        err = float(np.max(np.abs(rot.T @ rot - np.eye(3))))
        if err > self.ORTHONORMAL_TOL:
            raise ValueError(f"rotation is not orthonormal (deviation {err:.3e})")
        det = float(np.linalg.det(rot))
        if abs(det - 1.0) > self.ORTHONORMAL_TOL:
            raise ValueError(f"rotation determinant {det!r} is not 1")
        rot = rot.copy()
        tra = tra.copy()
        rot.setflags(write=False)
        tra.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tra)

    def __setattr__(self, name: str, value) -> None:
        raise AttributeError("Transform3 is immutable")

    @classmethod
    def identity(cls) -> "Transform3":
        return cls(np.eye(3), np.zeros(3))

    def __repr__(self) -> str:
        t = self.translation
        return f"Transform3(t=[{t[0]:.3f}, {t[1]:.3f}, {t[2]:.3f}])"


def yaw_rotation(psi: float) -> np.ndarray:
    """Rotation matrix for a yaw of psi radians about +z."""
    c = math.cos(psi)
    s = math.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
