"""Frame conditioning: center-crop with aspect-preserving resize onto a
square zero-padded canvas, plus an edge-preserving smoothing filter."""

from dataclasses import dataclass

import numpy as np

from .validation import check_image
from .volume import SliceImage


@dataclass(frozen=True)
class CropSpec:
    """Center-crop window and square output size."""

    crop_w: int = 288
    crop_h: int = 224
    out: int = 160
    pad_value: float = 0.0

    def __post_init__(self):
        if self.crop_w < 2 or self.crop_h < 2 or self.out < 2:
            raise ValueError("crop and output dimensions must be >= 2")


def _as_array(image) -> np.ndarray:
    if isinstance(image, SliceImage):
        return np.asarray(image.intensities, dtype=np.float64)
    return check_image(image)


def resize_bilinear(arr, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with corner-aligned endpoints; exact for same-size."""
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be positive")
    fy = np.linspace(0.0, h - 1.0, out_h)
    fx = np.linspace(0.0, w - 1.0, out_w)
    y0 = np.clip(np.floor(fy).astype(int), 0, max(h - 2, 0))
    x0 = np.clip(np.floor(fx).astype(int), 0, max(w - 2, 0))
    ty = (fy - y0)[:, None]
    tx = (fx - x0)[None, :]
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    top = arr[np.ix_(y0, x0)] * (1 - tx) + arr[np.ix_(y0, x1)] * tx
    bottom = arr[np.ix_(y1, x0)] * (1 - tx) + arr[np.ix_(y1, x1)] * tx
    return top * (1 - ty) + bottom * ty


def crop_resize(frame, spec: CropSpec = CropSpec()) -> SliceImage:
    """Center-crop, scale by out/longest-side, and zero-pad to a square.

    With the default spec a 224x288 crop scales to 124x160 content and gains
    18-row pad bands top and bottom.
    """
    arr = _as_array(frame)
    h, w = arr.shape
    if h < spec.crop_h or w < spec.crop_w:
        raise ValueError(
            f"frame {h}x{w} smaller than crop window {spec.crop_h}x{spec.crop_w}"
        )
    r0 = (h - spec.crop_h) // 2
    c0 = (w - spec.crop_w) // 2
    crop = arr[r0 : r0 + spec.crop_h, c0 : c0 + spec.crop_w]
    scale = spec.out / max(spec.crop_w, spec.crop_h)
    content_h = int(spec.crop_h * scale)
    content_w = int(spec.crop_w * scale)
    content = resize_bilinear(crop, content_h, content_w)
    canvas = np.full((spec.out, spec.out), spec.pad_value, dtype=np.float64)
    top = (spec.out - content_h) // 2
    left = (spec.out - content_w) // 2
    canvas[top : top + content_h, left : left + content_w] = content
    return SliceImage(intensities=np.clip(canvas, 0.0, 1.0))


INTENSITY_WEIGHT_FLOOR = 0.1


def smooth(image, radius: int = 2, intensity_sigma: float = 0.1):
    """Edge-preserving bilateral-style filter.

    Weighted mean over a (2r+1)^2 window combining a spatial Gaussian with an
    intensity Gaussian, so flat regions blur while sharp steps survive. The
    intensity weight keeps a small floor so even high-contrast outliers
    diffuse a little instead of freezing in place. A convex combination of
    in-range values, hence range-preserving.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    if intensity_sigma <= 0:
        raise ValueError("intensity_sigma must be positive")
    was_slice = isinstance(image, SliceImage)
    arr = _as_array(image)
    spatial_sigma = max(radius / 1.5, 0.5)
    padded = np.pad(arr, radius, mode="reflect")
    acc = np.zeros_like(arr)
    norm = np.zeros_like(arr)
    h, w = arr.shape
    floor = INTENSITY_WEIGHT_FLOOR
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            shifted = padded[radius + dy : radius + dy + h, radius + dx : radius + dx + w]
            w_spatial = np.exp(-(dx * dx + dy * dy) / (2.0 * spatial_sigma**2))
            gauss = np.exp(-((shifted - arr) ** 2) / (2.0 * intensity_sigma**2))
            weight = w_spatial * (floor + (1.0 - floor) * gauss)
            acc += weight * shifted
            norm += weight
    out = acc / norm
    return SliceImage(intensities=out, pose=image.pose) if was_slice else out
