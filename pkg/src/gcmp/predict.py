"""Image prediction by warping, plus quality metrics.

Warping is backward (no holes): each output pixel samples the reference with
bilinear interpolation, clamping out-of-bounds samples to the border.  The
motion-field convention elsewhere in the package is "forward": m(z) is the
displacement of the scene content between reference and target, so the
reference source pixel for target pixel z is z - m(z).  `warp` itself samples
at z + field, and `predict_from_motion` negates the field accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MotionField:
    """Dense per-pixel horizontal/vertical displacement in pixels."""

    m_h: np.ndarray
    m_v: np.ndarray

    def __post_init__(self):
        self.m_h = np.asarray(self.m_h, dtype=np.float64)
        self.m_v = np.asarray(self.m_v, dtype=np.float64)
        if self.m_h.shape != self.m_v.shape:
            raise ValueError("field components must share a shape")
        if not (np.isfinite(self.m_h).all() and np.isfinite(self.m_v).all()):
            raise ValueError("motion field must be finite")


def warp(reference: np.ndarray, field: MotionField) -> np.ndarray:
    """Sample the reference at z + (m_h(z), m_v(z)) with bilinear interpolation."""
    if reference.shape != field.m_h.shape:
        raise ValueError("reference dims do not match the field")
    n1, n2 = reference.shape
    yy, xx = np.mgrid[0:n1, 0:n2]
    sx = np.clip(xx + field.m_h, 0.0, n2 - 1.0)
    sy = np.clip(yy + field.m_v, 0.0, n1 - 1.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, n2 - 1)
    y1 = np.minimum(y0 + 1, n1 - 1)
    fx = sx - x0
    fy = sy - y0
    ref = reference.astype(np.float64)
    top = ref[y0, x0] * (1.0 - fx) + ref[y0, x1] * fx
    bot = ref[y1, x0] * (1.0 - fx) + ref[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def predict_from_motion(reference: np.ndarray, field: MotionField) -> np.ndarray:
    """Predict the target image from a forward motion field (samples z - m)."""
    return warp(reference, MotionField(-field.m_h, -field.m_v))


def disparity_of_depth(depth: np.ndarray, focal: float,
                       baseline: float) -> np.ndarray:
    """Horizontal disparity f*B/Z for a rectified camera at signed baseline B."""
    return focal * baseline / np.asarray(depth, dtype=np.float64)


def warp_view(reference: np.ndarray, depth_field: np.ndarray, focal: float,
              baseline: float) -> np.ndarray:
    """Predict a rectified view at signed baseline B from a per-pixel depth map."""
    disp = disparity_of_depth(depth_field, focal, baseline)
    return predict_from_motion(reference,
                               MotionField(disp, np.zeros_like(disp)))


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 255.0) -> float:
    """PSNR in dB; +inf for identical images."""
    if a.shape != b.shape:
        raise ValueError("images must share a shape")
    mse = float(np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


def disparity_error(est: MotionField, gt: MotionField) -> float:
    """Fraction of pixels whose horizontal displacement is off by >= 1 pixel."""
    if est.m_h.shape != gt.m_h.shape:
        raise ValueError("fields must share a shape")
    return float(np.mean(np.abs(est.m_h - gt.m_h) >= 1.0))
