"""Scalar losses and image metrics: soft dice, pose regression, NCC, MS-SSIM,
rotation-angle histograms with KL divergence, and a histogram-based semantic
descriptor for comparing slice content."""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .geometry import Pose
from .validation import check_image, check_same_shape
from .volume import SliceImage, Volume, sample_slice

DICE_EPS = 1e-8
NCC_DEGENERATE_VAR = 1e-12
HISTOGRAM_BINS = 32
HISTOGRAM_EPS = 1e-6
DESCRIPTOR_LENGTH = 128
SIMILARITY_FLOOR = 1e-3

# first three of the classic five per-scale weights, renormalized below
_MSSSIM_WEIGHTS = np.array([0.0448, 0.2856, 0.3001])
_MSSSIM_WEIGHTS = _MSSSIM_WEIGHTS / _MSSSIM_WEIGHTS.sum()
_WINDOW_SIZE = 11
_WINDOW_SIGMA = 1.5
_K1 = 0.01
_K2 = 0.03
_DYNAMIC_RANGE = 1.0


def _as_array(image) -> np.ndarray:
    if isinstance(image, SliceImage):
        return np.asarray(image.intensities, dtype=np.float64)
    return check_image(image)


def dice_loss(slice_image, mask) -> float:
    """Soft dice loss between a (possibly soft) foreground image and a mask.

    1 - (2*sum(s*y) + eps) / (sum(s) + sum(y) + eps); two empty inputs agree
    perfectly and score 0.
    """
    s = _as_array(slice_image)
    y = np.asarray(mask, dtype=np.float64)
    check_same_shape(s, y, "slice", "mask")
    inter = float(np.sum(s * y))
    total = float(np.sum(s) + np.sum(y))
    return 1.0 - (2.0 * inter + DICE_EPS) / (total + DICE_EPS)


def pose_regression_loss(theta: Pose, theta_hat: Pose) -> float:
    """L2 norm of the stacked (q, delta) difference, sign-aligning q_hat first."""
    q = theta.q
    q_hat = theta_hat.q
    if float(q @ q_hat) < 0.0:
        q_hat = -q_hat
    diff = np.concatenate([q - q_hat, theta.delta - theta_hat.delta])
    return float(np.linalg.norm(diff))


def atlas_loss(volume: Volume, atlas_slice_mask, theta: Pose, theta_hat: Pose) -> float:
    """Shape plus pose objective: dice of the re-sampled slice against the
    true-pose mask, plus the pose regression distance."""
    mask = np.asarray(atlas_slice_mask)
    h, w = mask.shape
    resampled = sample_slice(volume, theta_hat, out_w=w, out_h=h)
    return dice_loss(resampled, mask) + pose_regression_loss(theta, theta_hat)


def ncc(a, b, return_flag: bool = False):
    """Pearson correlation of pixel intensities.

    A pair where either image has variance below 1e-12 is degenerate and
    scores 0; pass return_flag=True to receive (value, degenerate).
    """
    x = _as_array(a).ravel()
    y = _as_array(b).ravel()
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    x = x - x.mean()
    y = y - y.mean()
    vx = float(x @ x) / x.size
    vy = float(y @ y) / y.size
    degenerate = vx < NCC_DEGENERATE_VAR or vy < NCC_DEGENERATE_VAR
    if degenerate:
        value = 0.0
    else:
        value = float(np.clip((x @ y) / np.sqrt((x @ x) * (y @ y)), -1.0, 1.0))
    return (value, degenerate) if return_flag else value


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    w = np.exp(-(x**2) / (2.0 * sigma**2))
    return w / w.sum()


def _window_filter(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    out = correlate1d(img, kernel, axis=0, mode="reflect")
    return correlate1d(out, kernel, axis=1, mode="reflect")


def _ssim_maps(a: np.ndarray, b: np.ndarray, kernel: np.ndarray):
    c1 = (_K1 * _DYNAMIC_RANGE) ** 2
    c2 = (_K2 * _DYNAMIC_RANGE) ** 2
    mu_a = _window_filter(a, kernel)
    mu_b = _window_filter(b, kernel)
    var_a = _window_filter(a * a, kernel) - mu_a**2
    var_b = _window_filter(b * b, kernel) - mu_b**2
    cov = _window_filter(a * b, kernel) - mu_a * mu_b
    luminance = (2.0 * mu_a * mu_b + c1) / (mu_a**2 + mu_b**2 + c1)
    contrast_structure = (2.0 * cov + c2) / (var_a + var_b + c2)
    return luminance, contrast_structure


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    img = img[: h - h % 2, : w - w % 2]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def ms_ssim(a, b, scales: int = 3) -> float:
    """Multi-scale SSIM over dyadic scales.

    Gaussian 11x11 window (sigma 1.5), k1=0.01, k2=0.03, dynamic range 1.0;
    per-scale weights are the classic values renormalized to the scale count.
    Inputs must allow `scales - 1` halvings with at least 8 pixels remaining
    per side (32 minimum at the default 3 scales).
    """
    x = _as_array(a)
    y = _as_array(b)
    check_same_shape(x, y, "a", "b")
    if scales < 1:
        raise ValueError("scales must be >= 1")
    if min(x.shape) // 2 ** (scales - 1) < 8:
        raise ValueError(
            f"image of shape {x.shape} too small for {scales} scales (needs >= {8 * 2 ** (scales - 1)})"
        )
    if scales == len(_MSSSIM_WEIGHTS):
        weights = _MSSSIM_WEIGHTS
    else:
        w = np.ones(scales)
        weights = w / w.sum()
    kernel = _gaussian_window(_WINDOW_SIZE, _WINDOW_SIGMA)
    value = 1.0
    for level in range(scales):
        luminance, cs = _ssim_maps(x, y, kernel)
        cs_mean = max(float(cs.mean()), 0.0)
        if level == scales - 1:
            lum_mean = max(float((luminance * cs).mean()), 0.0)
            value *= lum_mean ** weights[level]
        else:
            value *= cs_mean ** weights[level]
            x = _downsample2(x)
            y = _downsample2(y)
    return float(np.clip(value, 0.0, 1.0))


@dataclass(frozen=True)
class RotationHistogram:
    """Smoothed probability histogram of rotation angles over [0, pi]."""

    edges: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.float64)
        probs = np.asarray(self.probs, dtype=np.float64)
        if edges.ndim != 1 or probs.ndim != 1 or edges.size != probs.size + 1:
            raise ValueError("edges must be 1D with one more entry than probs")
        if np.any(probs <= 0.0):
            raise ValueError("probabilities must be strictly positive after smoothing")
        if abs(float(probs.sum()) - 1.0) > 1e-9:
            raise ValueError("probabilities must sum to 1")
        for name, arr in (("edges", edges), ("probs", probs)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def rotation_histogram(
    angles, bins: int = HISTOGRAM_BINS, eps: float = HISTOGRAM_EPS
) -> RotationHistogram:
    """Bin rotation angles into a smoothed probability histogram on [0, pi]."""
    arr = np.asarray(angles, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("angle list must be non-empty")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    if np.any(arr < -1e-9) or np.any(arr > np.pi + 1e-9):
        raise ValueError("angles must lie in [0, pi]")
    arr = np.clip(arr, 0.0, np.pi)
    counts, edges = np.histogram(arr, bins=bins, range=(0.0, np.pi))
    probs = counts / counts.sum()
    probs = probs + eps
    probs = probs / probs.sum()
    return RotationHistogram(edges=edges, probs=probs)


def kl_divergence(p: RotationHistogram, q: RotationHistogram) -> float:
    """KL(p || q) in nats; requires matching bin edges."""
    if p.edges.shape != q.edges.shape or not np.allclose(p.edges, q.edges, atol=1e-12):
        raise ValueError("histograms must share bin edges")
    return float(np.sum(p.probs * np.log(p.probs / q.probs)))


@dataclass(frozen=True)
class SemanticDescriptor:
    """Unit-norm non-negative feature vector summarizing slice content."""

    vector: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1 or vec.size != DESCRIPTOR_LENGTH:
            raise ValueError(f"descriptor must have length {DESCRIPTOR_LENGTH}")
        if np.any(vec < 0.0):
            raise ValueError("descriptor entries must be non-negative")
        if abs(float(np.linalg.norm(vec)) - 1.0) > 1e-9:
            raise ValueError("descriptor must be L2-normalized")
        vec = vec.copy()
        vec.flags.writeable = False
        object.__setattr__(self, "vector", vec)


def semantic_descriptor(image) -> SemanticDescriptor:
    """Intensity and gradient-orientation histogram descriptor.

    64 intensity bins over [0,1] concatenated with 8 gradient-orientation
    bins per cell of a 2x4 spatial grid (magnitude-weighted), L2-normalized.
    """
    arr = _as_array(image)
    if min(arr.shape) < 32:
        raise ValueError(f"descriptor needs images >= 32x32, got {arr.shape}")
    intensity_hist, _ = np.histogram(arr, bins=64, range=(0.0, 1.0))
    intensity_hist = intensity_hist.astype(np.float64) / arr.size

    gy, gx = np.gradient(arr)
    magnitude = np.hypot(gx, gy)
    orientation = np.arctan2(gy, gx)
    orient_bin = np.clip(((orientation + np.pi) / (2.0 * np.pi) * 8).astype(int), 0, 7)

    h, w = arr.shape
    rows = np.minimum(np.arange(h) * 2 // h, 1)
    cols = np.minimum(np.arange(w) * 4 // w, 3)
    cell = rows[:, None] * 4 + cols[None, :]
    flat_bin = cell * 8 + orient_bin
    grad_hist = np.bincount(flat_bin.ravel(), weights=magnitude.ravel(), minlength=64)
    total = grad_hist.sum()
    if total > 0:
        grad_hist = grad_hist / total

    vec = np.concatenate([intensity_hist, grad_hist])
    return SemanticDescriptor(vector=vec / np.linalg.norm(vec))


def semantic_similarity(d1: SemanticDescriptor, d2: SemanticDescriptor) -> float:
    """Inner product of descriptors, floored at 1e-3 and capped at 1."""
    value = float(d1.vector @ d2.vector)
    return float(np.clip(value, SIMILARITY_FLOOR, 1.0))
