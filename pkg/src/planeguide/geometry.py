"""Quaternion algebra on SO(3), geodesic distances, and plane-to-plane transforms.

Conventions used throughout the package:
  - quaternions are scalar-first [w, x, y, z] numpy arrays,
  - products are Hamilton products describing active rotations,
  - q and -q denote the same 3D orientation (double cover), so every
    orientation distance is invariant under a sign flip of either argument.
"""

from dataclasses import dataclass, field

import numpy as np

from .validation import check_quaternion, check_unit_quaternion, check_vector3

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])

# Scaling between the S^3 arc length and the physical 3D rotation angle:
# the quaternion-space angle is half the rotation angle it represents.
GEODESIC_ALPHA = 0.5


@dataclass(frozen=True)
class AlignmentConstants:
    """Fixed constants of the orientation-alignment losses."""

    alpha: float = GEODESIC_ALPHA

    def __post_init__(self):
        if self.alpha != GEODESIC_ALPHA:
            raise ValueError("alpha is fixed at 0.5")


def quat_normalize(q) -> np.ndarray:
    """Return q scaled to unit length.

    Raises ValueError for a near-zero quaternion.
    """
    arr = check_quaternion(q)
    norm = np.linalg.norm(arr)
    if norm < 1e-12:
        raise ValueError("cannot normalize zero quaternion")
    return arr / norm


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product a * b.

    Preserves norms: ||a*b|| = ||a|| * ||b||.
    """
    aw, ax, ay, az = check_quaternion(a, name="a")
    bw, bx, by, bz = check_quaternion(b, name="b")
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q) -> np.ndarray:
    """Conjugate (w, -x, -y, -z); inverse for unit quaternions."""
    arr = check_quaternion(q)
    return np.array([arr[0], -arr[1], -arr[2], -arr[3]])


def to_rotation_matrix(q) -> np.ndarray:
    """3x3 rotation matrix of a unit quaternion.

    R(q) = R(-q); non-unit input is rejected.
    """
    w, x, y, z = check_unit_quaternion(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def geodesic_loss(a, b) -> float:
    """Orientation distance arccos(|<a, b>|) in [0, pi/2].

    This is the quaternion-space arc length between the two orientations,
    i.e. half of the physical 3D rotation angle separating them. Symmetric
    and invariant under sign flips of either argument; the inner product is
    clamped before arccos to avoid NaN at the numerical boundary.
    """
    qa = check_unit_quaternion(a, name="a")
    qb = check_unit_quaternion(b, name="b")
    return float(np.arccos(np.clip(abs(float(qa @ qb)), 0.0, 1.0)))


def rotation_angle_3d(a, b) -> float:
    """Physical 3D rotation angle between two orientations, in [0, pi]."""
    return 2.0 * geodesic_loss(a, b)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    """Unit quaternion rotating by `angle` radians about `axis`."""
    ax = check_vector3(axis, name="axis")
    norm = np.linalg.norm(ax)
    if norm < 1e-12:
        return IDENTITY_QUAT.copy()
    ax = ax / norm
    half = 0.5 * angle
    return np.array([np.cos(half), *(np.sin(half) * ax)])


def to_axis_angle(q):
    """Decompose a unit quaternion into (axis, angle) with angle in [0, pi].

    The axis defaults to (0, 0, 1) when the rotation is negligible;
    reconstructing with quat_from_axis_angle recovers +/-q.
    """
    arr = check_unit_quaternion(q)
    if arr[0] < 0.0:
        arr = -arr
    sin_half = np.linalg.norm(arr[1:])
    angle = 2.0 * np.arctan2(sin_half, arr[0])
    if angle < 1e-9:
        return np.array([0.0, 0.0, 1.0]), 0.0
    return arr[1:] / sin_half, float(angle)


def slerp(a, b, t: float) -> np.ndarray:
    """Spherical linear interpolation from a to b along the shorter arc."""
    qa = quat_normalize(a)
    qb = quat_normalize(b)
    dot = float(qa @ qb)
    if dot < 0.0:
        qb = -qb
        dot = -dot
    dot = min(dot, 1.0)
    theta = np.arccos(dot)
    if theta < 1e-10:
        return quat_normalize((1.0 - t) * qa + t * qb)
    s = np.sin(theta)
    return (np.sin((1.0 - t) * theta) / s) * qa + (np.sin(t * theta) / s) * qb


def random_unit_quaternions(n: int, rng) -> np.ndarray:
    """(n, 4) orientations drawn uniformly on SO(3) (normalized 4D gaussians)."""
    q = rng.standard_normal((n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Pose:
    """Location of a 2D plane in the volume: orientation q plus translation.

    `delta` is in normalized volume coordinates, [-1, 1] per axis with 0 at
    the volume center. q is normalized on construction.
    """

    q: np.ndarray
    delta: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "q", _frozen(quat_normalize(self.q)))
        object.__setattr__(self, "delta", _frozen(check_vector3(self.delta, name="delta")))

    def to_dict(self) -> dict:
        return {"q": [float(v) for v in self.q], "delta": [float(v) for v in self.delta]}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(q=np.asarray(d["q"], dtype=float), delta=np.asarray(d["delta"], dtype=float))


@dataclass(frozen=True)
class StandardPlaneDef:
    """A named standard plane with two opposite in-plane heading priors.

    q_pos and q_neg map the plane onto itself with reversed heading: they are
    exactly pi apart as 3D rotations, about an axis lying in the plane.
    """

    sp_id: str
    q_pos: np.ndarray
    q_neg: np.ndarray
    delta_sp: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q_pos", _frozen(quat_normalize(self.q_pos)))
        object.__setattr__(self, "q_neg", _frozen(quat_normalize(self.q_neg)))
        object.__setattr__(self, "delta_sp", _frozen(check_vector3(self.delta_sp, name="delta_sp")))
        angle = rotation_angle_3d(self.q_pos, self.q_neg)
        if abs(angle - np.pi) > 1e-6:
            raise ValueError(
                f"q_pos and q_neg must be pi apart as 3D rotations, got {angle}"
            )
        rel = quat_multiply(quat_conjugate(self.q_pos), self.q_neg)
        axis, _ = to_axis_angle(quat_normalize(rel))
        if abs(axis[2]) > 1e-6:
            raise ValueError("q_pos -> q_neg rotation axis must lie in the plane")

    def to_dict(self) -> dict:
        return {
            "id": self.sp_id,
            "q_pos": [float(v) for v in self.q_pos],
            "q_neg": [float(v) for v in self.q_neg],
            "delta_sp": [float(v) for v in self.delta_sp],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StandardPlaneDef":
        return cls(
            sp_id=d["id"],
            q_pos=np.asarray(d["q_pos"], dtype=float),
            q_neg=np.asarray(d["q_neg"], dtype=float),
            delta_sp=np.asarray(d["delta_sp"], dtype=float),
        )


@dataclass(frozen=True)
class GuidanceInstruction:
    """Rigid transformation from a pose toward a standard plane.

    axis/angle decompose the relative orientation; translation is the
    remaining offset in normalized volume coordinates. chosen_direction
    records which of the two opposite SP headings was targeted.
    """

    target_sp: str
    axis: np.ndarray
    angle: float
    translation: np.ndarray
    chosen_direction: str

    def __post_init__(self):
        object.__setattr__(self, "axis", _frozen(check_vector3(self.axis, name="axis")))
        object.__setattr__(self, "translation", _frozen(check_vector3(self.translation, name="translation")))
        if not 0.0 <= self.angle <= np.pi + 1e-12:
            raise ValueError(f"angle must be in [0, pi], got {self.angle}")
        if self.chosen_direction not in ("pos", "neg"):
            raise ValueError("chosen_direction must be 'pos' or 'neg'")

    def to_dict(self) -> dict:
        return {
            "target_sp": self.target_sp,
            "axis": [float(v) for v in self.axis],
            "angle": float(self.angle),
            "translation": [float(v) for v in self.translation],
            "chosen_direction": self.chosen_direction,
        }


def transform_to_sp(pose: Pose, sp: StandardPlaneDef, direction: str = "auto") -> GuidanceInstruction:
    """Transformation carrying `pose` onto the standard plane.

    The relative orientation is q_rel = conj(q) * q_sp and the remaining
    translation is delta_sp - R(q_rel) @ delta. With direction="auto" the SP
    heading (pos or neg) needing the smaller rotation is chosen, preferring
    pos on a tie. Composing the pose with the returned instruction through
    apply_guidance reproduces the SP pose.
    """
    if direction not in ("auto", "pos", "neg"):
        raise ValueError(f"direction must be auto, pos or neg, got {direction!r}")
    if direction == "auto":
        d_pos = geodesic_loss(pose.q, sp.q_pos)
        d_neg = geodesic_loss(pose.q, sp.q_neg)
        direction = "pos" if d_pos <= d_neg else "neg"
    q_target = sp.q_pos if direction == "pos" else sp.q_neg
    q_rel = quat_normalize(quat_multiply(quat_conjugate(pose.q), q_target))
    translation = sp.delta_sp - to_rotation_matrix(q_rel) @ pose.delta
    axis, angle = to_axis_angle(q_rel)
    return GuidanceInstruction(
        target_sp=sp.sp_id,
        axis=axis,
        angle=angle,
        translation=translation,
        chosen_direction=direction,
    )


def apply_guidance(pose: Pose, guidance: GuidanceInstruction) -> Pose:
    """Compose a pose with a guidance instruction, landing on its target."""
    q_rel = quat_from_axis_angle(guidance.axis, guidance.angle)
    q_new = quat_multiply(pose.q, q_rel)
    delta_new = to_rotation_matrix(q_rel) @ pose.delta + guidance.translation
    return Pose(q=q_new, delta=delta_new)
