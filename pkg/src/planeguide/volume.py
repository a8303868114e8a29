"""3D atlas volumes, pose-parameterized plane grids, and trilinear slice sampling.

Coordinates are normalized to [-1, 1] per axis with 0 at the volume center
(align-corners convention: -1 and +1 land exactly on the first and last
voxel). Sample points outside [-1, 1]^3 read as intensity 0.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import (
    Pose,
    StandardPlaneDef,
    quat_from_axis_angle,
    quat_multiply,
    to_rotation_matrix,
)
from .validation import check_image

DEFAULT_SLICE_SIZE = 160
DEFAULT_FG_THRESHOLD = 0.05


@dataclass(frozen=True)
class Volume:
    """Immutable 3D scalar intensity grid.

    `intensities` is indexed [ix, iy, iz] with shape (W, H, D); values are
    float32 in [0, 1]. The array is made Fortran-contiguous so its flat view
    is in x-fastest order, matching the on-disk layout.
    """

    intensities: np.ndarray
    name: str = "volume"

    def __post_init__(self):
        arr = np.asfortranarray(self.intensities, dtype=np.float32)
        if arr.ndim != 3 or min(arr.shape) < 2:
            raise ValueError(f"volume must be 3D with all dims >= 2, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("volume intensities must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("volume intensities must lie in [0, 1]")
        arr.flags.writeable = False
        object.__setattr__(self, "intensities", arr)

    @property
    def dims(self):
        """(W, H, D) in voxels."""
        return self.intensities.shape


@dataclass(frozen=True)
class SliceImage:
    """A 2D grayscale image, optionally carrying a mask and the pose it was cut at."""

    intensities: np.ndarray
    mask: np.ndarray | None = None
    pose: Pose | None = None

    def __post_init__(self):
        arr = np.asarray(self.intensities, dtype=np.float64)
        if arr.ndim != 2 or min(arr.shape) < 2:
            raise ValueError(f"slice must be 2D with dims >= 2, got shape {arr.shape}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "intensities", arr)
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=bool)
            if m.shape != arr.shape:
                raise ValueError("mask shape must match intensities")
            m = m.copy()
            m.flags.writeable = False
            object.__setattr__(self, "mask", m)

    @property
    def width(self) -> int:
        return self.intensities.shape[1]

    @property
    def height(self) -> int:
        return self.intensities.shape[0]


@dataclass(frozen=True)
class PlaneGrid:
    """Per-pixel 3D sample coordinates of an oriented plane, shape (H, W, 3)."""

    coords: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coords, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"grid coords must have shape (H, W, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("grid coordinates must be finite")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "coords", arr)

    @property
    def shape(self):
        return self.coords.shape[:2]


def build_grid(pose: Pose, out_w: int, out_h: int, extent: float = 1.0) -> PlaneGrid:
    """Sample coordinates for the plane at `pose`.

    Pixel (u, v) maps to R(q) @ (x_u, y_v, 0) + delta, where x_u spans
    [-extent, extent] over the row and y_v over the column. The image plane
    is the z=0 plane of the pose frame.
    """
    if out_w < 2 or out_h < 2:
        raise ValueError("output dimensions must be >= 2")
    if extent <= 0:
        raise ValueError("extent must be positive")
    xs = np.linspace(-extent, extent, out_w)
    ys = np.linspace(-extent, extent, out_h)
    local = np.zeros((out_h, out_w, 3))
    local[:, :, 0] = xs[None, :]
    local[:, :, 1] = ys[:, None]
    R = to_rotation_matrix(pose.q)
    coords = local @ R.T + pose.delta
    return PlaneGrid(coords=coords)


def _gather_corners(volume: Volume, pts: np.ndarray):
    """Shared setup for trilinear value/gradient evaluation.

    Returns (inside mask, corner values c[8], fractional offsets t, dims).
    """
    w, h, d = volume.dims
    dims = np.array([w, h, d])
    inside = np.all(np.abs(pts) <= 1.0, axis=-1)
    f = (pts + 1.0) * 0.5 * (dims - 1)
    i0 = np.clip(np.floor(f).astype(np.int64), 0, dims - 2)
    t = f - i0
    flat = volume.intensities.ravel(order="F")
    x0, y0, z0 = i0[..., 0], i0[..., 1], i0[..., 2]
    base = x0 + w * (y0 + h * z0)
    c = np.empty((8,) + pts.shape[:-1])
    for ci, (dx, dy, dz) in enumerate(
        [(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0), (0, 0, 1), (1, 0, 1), (0, 1, 1), (1, 1, 1)]
    ):
        c[ci] = flat[base + dx + w * dy + w * h * dz]
    return inside, c, t, dims


def sample_points(volume: Volume, pts) -> np.ndarray:
    """Trilinear interpolation of the volume at normalized points (..., 3)."""
    pts = np.asarray(pts, dtype=np.float64)
    inside, c, t, _ = _gather_corners(volume, pts)
    tx, ty, tz = t[..., 0], t[..., 1], t[..., 2]
    # lerp x, then y, then z
    c00 = c[0] + (c[1] - c[0]) * tx
    c10 = c[2] + (c[3] - c[2]) * tx
    c01 = c[4] + (c[5] - c[4]) * tx
    c11 = c[6] + (c[7] - c[6]) * tx
    c0 = c00 + (c10 - c00) * ty
    c1 = c01 + (c11 - c01) * ty
    out = c0 + (c1 - c0) * tz
    return np.where(inside, out, 0.0)


def sample_points_gradient(volume: Volume, pts) -> np.ndarray:
    """Spatial gradient of the trilinear interpolant, in normalized units.

    Shape (..., 3); zero outside the volume. The analytic derivative of the
    per-cell trilinear form, scaled by (N-1)/2 per axis to account for the
    normalized-to-voxel mapping.
    """
    pts = np.asarray(pts, dtype=np.float64)
    inside, c, t, dims = _gather_corners(volume, pts)
    tx, ty, tz = t[..., 0], t[..., 1], t[..., 2]
    scale = (dims - 1) * 0.5

    def lerp(a, b, s):
        return a + (b - a) * s

    # d/dx: difference of the two x-faces, interpolated over (y, z)
    gx = lerp(lerp(c[1] - c[0], c[3] - c[2], ty), lerp(c[5] - c[4], c[7] - c[6], ty), tz)
    gy = lerp(lerp(c[2] - c[0], c[3] - c[1], tx), lerp(c[6] - c[4], c[7] - c[5], tx), tz)
    gz = lerp(lerp(c[4] - c[0], c[5] - c[1], tx), lerp(c[6] - c[2], c[7] - c[3], tx), ty)
    grad = np.stack([gx * scale[0], gy * scale[1], gz * scale[2]], axis=-1)
    grad[~inside] = 0.0
    return grad


def sample_slice(
    volume: Volume,
    pose: Pose,
    out_w: int = DEFAULT_SLICE_SIZE,
    out_h: int = DEFAULT_SLICE_SIZE,
    extent: float = 1.0,
) -> SliceImage:
    """Resample the oriented plane at `pose` into a 2D image."""
    grid = build_grid(pose, out_w, out_h, extent)
    values = sample_points(volume, grid.coords)
    return SliceImage(intensities=np.clip(values, 0.0, 1.0), pose=pose)


def sample_slice_gradient(
    volume: Volume,
    pose: Pose,
    out_w: int = DEFAULT_SLICE_SIZE,
    out_h: int = DEFAULT_SLICE_SIZE,
    extent: float = 1.0,
) -> np.ndarray:
    """Per-pixel 3D spatial gradient of the sampled slice, shape (H, W, 3)."""
    grid = build_grid(pose, out_w, out_h, extent)
    return sample_points_gradient(volume, grid.coords)


def binarize(image, threshold: float = DEFAULT_FG_THRESHOLD) -> np.ndarray:
    """Foreground mask: intensity strictly above threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    arr = image.intensities if isinstance(image, SliceImage) else check_image(image)
    return arr > threshold


def quantize_u8(image) -> np.ndarray:
    """8-bit grayscale for transport: round(clip(v, 0, 1) * 255).

    The only quantization rule used anywhere; CLI files and API payloads
    produced from the same floats are therefore byte-identical.
    """
    arr = image.intensities if isinstance(image, SliceImage) else check_image(image)
    return np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)


def dequantize_u8(payload, height: int, width: int) -> np.ndarray:
    """Row-major uint8 bytes back to float32 in [0, 1]; at most 1/255 off."""
    arr = np.frombuffer(bytes(payload), dtype=np.uint8)
    if arr.size != height * width:
        raise ValueError(f"expected {height * width} bytes for {height}x{width}, got {arr.size}")
    return (arr.reshape(height, width).astype(np.float32)) / 255.0


def _raw_and_sidecar(path) -> tuple[Path, Path]:
    p = Path(path)
    raw = p if p.suffix == ".raw" else p.with_name(p.name + ".raw")
    return raw, raw.with_suffix(".json")


def save_volume(volume: Volume, path) -> Path:
    """Write raw little-endian f32 voxels (x-fastest) plus a JSON sidecar.

    Returns the raw file path; the sidecar sits alongside with a .json suffix.
    """
    raw_path, sidecar = _raw_and_sidecar(path)
    payload = np.ascontiguousarray(volume.intensities.ravel(order="F"), dtype="<f4")
    raw_path.write_bytes(payload.tobytes())
    sidecar.write_text(json.dumps({"dims": list(volume.dims), "name": volume.name}))
    return raw_path


def load_volume(path) -> Volume:
    """Load a volume written by save_volume; errors on dims/payload mismatch."""
    raw_path, sidecar = _raw_and_sidecar(path)
    if not raw_path.exists() or not sidecar.exists():
        raise FileNotFoundError(f"missing volume file or sidecar for {path}")
    meta = json.loads(sidecar.read_text())
    w, h, d = (int(v) for v in meta["dims"])
    payload = np.frombuffer(raw_path.read_bytes(), dtype="<f4")
    if payload.size != w * h * d:
        raise ValueError(
            f"sidecar dims {w}x{h}x{d} expect {w * h * d} voxels, payload has {payload.size}"
        )
    arr = payload.reshape((w, h, d), order="F")
    return Volume(intensities=arr, name=meta.get("name", "volume"))


def save_standard_planes(sps: list[StandardPlaneDef], path) -> Path:
    p = Path(path)
    p.write_text(json.dumps({"standard_planes": [sp.to_dict() for sp in sps]}, indent=2))
    return p


def load_standard_planes(path) -> list[StandardPlaneDef]:
    data = json.loads(Path(path).read_text())
    return [StandardPlaneDef.from_dict(d) for d in data["standard_planes"]]


# --- synthetic phantom -------------------------------------------------------

# Outer semi-axes in normalized units; the bright shell spans
# _SHELL_INNER..1.0 of the warped radius and a dark moat separates the
# head from the surrounding landmarks. Distinct semi-axes break every
# axis-permuting rotation; the off-center placement breaks every
# sign-flipping one.
_OUTER = np.array([0.84, 0.74, 0.62])
_CENTER = np.array([0.06, 0.04, -0.05])
_SHELL_INNER = 0.88
# Foreground stays bright on purpose: the soft-dice of a slice against its
# own binarized mask is roughly 1 - mean foreground intensity, and downstream
# shape scoring relies on that residual staying small.
_INTERIOR_BASE = 0.97
_SHELL_VALUE = 1.0

# (center, semi-axes, value): bright landmarks outside the skull, the
# stand-ins for surrounding maternal tissue. They are intensity-matched to
# the head (shape scores barely notice them) but their constellation is what
# lets a single oblique cut reveal its own orientation: an ellipsoid alone
# looks nearly identical from too many directions.
_EXTERNALS = [
    ((0.45, -0.30, 0.80), (0.40, 0.25, 0.15), 1.00),
    ((-0.50, 0.35, -0.85), (0.30, 0.30, 0.12), 0.90),
    ((0.85, 0.80, 0.20), (0.12, 0.15, 0.50), 0.95),
    ((-0.80, -0.75, 0.10), (0.15, 0.18, 0.35), 0.85),
    ((-0.75, 0.70, 0.55), (0.20, 0.22, 0.30), 1.00),
    ((0.75, -0.70, -0.50), (0.22, 0.18, 0.28), 0.90),
]

# (center relative to _CENTER, semi-axes, value): interior structures, placed
# and sized irregularly so slices stay identifiable.
_STRUCTURES = [
    ((0.30, 0.10, 0.08), (0.26, 0.12, 0.10), 0.82),
    ((-0.32, 0.14, 0.04), (0.18, 0.10, 0.09), 0.86),
    ((0.14, -0.35, -0.22), (0.16, 0.16, 0.14), 0.78),
    ((-0.12, -0.33, -0.20), (0.13, 0.14, 0.12), 0.80),
    ((0.00, 0.38, 0.05), (0.08, 0.10, 0.06), 0.75),
    ((0.42, -0.26, 0.24), (0.07, 0.07, 0.07), 1.00),
]


def _standard_planes() -> list[StandardPlaneDef]:
    # pi about the in-plane x axis gives the opposite-normal traversal
    flip = np.array([0.0, 1.0, 0.0, 0.0])
    q_tvp = quat_multiply(
        quat_from_axis_angle((1.0, 0.0, 0.0), 0.12),
        quat_from_axis_angle((0.0, 1.0, 0.0), 0.07),
    )
    tvp = StandardPlaneDef(
        sp_id="tvp",
        q_pos=q_tvp,
        q_neg=quat_multiply(q_tvp, flip),
        delta_sp=_CENTER + np.array([0.0, 0.05, 0.08]),
    )
    q_tcp = quat_multiply(
        quat_from_axis_angle((1.0, 0.0, 0.0), -0.45),
        quat_from_axis_angle((0.0, 0.0, 1.0), 0.10),
    )
    tcp = StandardPlaneDef(
        sp_id="tcp",
        q_pos=q_tcp,
        q_neg=quat_multiply(q_tcp, flip),
        delta_sp=_CENTER + np.array([0.0, -0.10, -0.12]),
    )
    return [tvp, tcp]


def _ellipsoid_mask(coords, center, semi) -> np.ndarray:
    rel = (coords - np.asarray(center)) / np.asarray(semi)
    return np.einsum("...i,...i->...", rel, rel) <= 1.0


# Quadratic cross-terms warp the head from a pure ellipsoid into an egg: a
# plain ellipsoid's cross-sections are all two-parameter ellipses, leaving
# the outline nearly blind to orientation, while the egg's outline asymmetry
# varies smoothly with cut direction. Coefficients stay small enough that
# the level sets remain nested.
_WARP_X = (0.20, -0.12)
_WARP_Y = (-0.10, 0.16)
_WARP_Z = (0.14, -0.18)


def _head_r2(coords) -> np.ndarray:
    """Squared egg-shell radius; the head surface is the level set 1.0."""
    rel = (np.asarray(coords) - _CENTER) / _OUTER
    u, v, w = rel[..., 0], rel[..., 1], rel[..., 2]
    uw = u + _WARP_X[0] * v * v + _WARP_X[1] * w * w
    vw = v + _WARP_Y[0] * u * u + _WARP_Y[1] * w * w
    ww = w + _WARP_Z[0] * u * u + _WARP_Z[1] * v * v
    return uw * uw + vw * vw + ww * ww


def generate_phantom(seed: int, dims=(64, 64, 64)) -> tuple[Volume, list[StandardPlaneDef]]:
    """Build a deterministic head-like test volume with known standard planes.

    A bright egg-shaped shell encloses a bright interior holding several
    asymmetric darker structures (ventricle, cerebellum, and cavum stand-ins)
    plus one small bright marker, on an exactly-zero background. Asymmetry is
    deliberate: no nontrivial rotation maps the volume onto itself, so slice
    poses stay identifiable.

    Args:
        seed: controls the low-frequency interior texture; same seed, same volume.
        dims: (W, H, D) voxel counts, each >= 32.

    Returns:
        (volume, [tvp, tcp]). The two oblique plane definitions are fixed
        constants independent of the seed, each carrying both traversal
        directions.
    """
    dims = tuple(int(v) for v in dims)
    if len(dims) != 3 or min(dims) < 32:
        raise ValueError(f"phantom dims must be three values >= 32, got {dims}")
    rng = np.random.default_rng(seed)

    axes = [np.linspace(-1.0, 1.0, n) for n in dims]
    coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    r2 = _head_r2(coords)
    interior = r2 <= _SHELL_INNER**2
    shell = (r2 > _SHELL_INNER**2) & (r2 <= 1.0)

    vol = np.zeros(dims)
    vol[interior] = _INTERIOR_BASE

    # seeded low-frequency texture keeps flat regions from being ambiguous;
    # amplitude small enough that base + texture never clips at 1.0
    texture = np.zeros(dims)
    for _ in range(3):
        k = rng.uniform(2.0, 5.0, size=3)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        texture += 0.008 * np.cos(coords @ k + phase)
    vol[interior] += texture[interior]

    for center, semi, value in _STRUCTURES:
        inside = _ellipsoid_mask(coords, _CENTER + np.asarray(center), semi) & interior
        vol[inside] = value

    vol[shell] = _SHELL_VALUE
    vol = np.clip(vol, 0.0, 1.0)
    vol[r2 > 1.0] = 0.0

    # surrounding-tissue landmarks, kept clear of the skull by a dark moat
    for center, semi, value in _EXTERNALS:
        inside = _ellipsoid_mask(coords, np.asarray(center), semi) & (r2 > 1.15)
        vol[inside] = value

    volume = Volume(intensities=vol.astype(np.float32), name=f"phantom-{seed}")
    return volume, _standard_planes()
