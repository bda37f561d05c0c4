"""Appearance features: ROI normalization, 2-D DCT coding, temporal stacking,
and early fusion of descriptor streams.

Feature files use the binary container from :mod:`lrc.storage` with magic
``LRF1``; frames are stored row-major as float32. The header carries the
dimension, frame count, component layout, and the feature-config fingerprint.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.fft
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .storage import atomic_write_bytes, pack_container, read_container
from .validation import check_array_2d

FEATURE_MAGIC = b"LRF1"
DEFAULT_ROI_SIZE = (32, 32)
DEFAULT_NUM_COEFFICIENTS = 64
DEFAULT_WINDOW = 3


class FeatureError(ValueError):
    """Raised for invalid feature inputs or mismatched streams."""


# ---------------------------------------------------------------------------
# ROI extraction
# ---------------------------------------------------------------------------

def normalize_roi(image, landmarks, roi_size=DEFAULT_ROI_SIZE, margin=0.0):
    """Crop the mouth bounding box and resample it to a fixed size.

    The axis-aligned bounding box of the landmarks (x, y pixel coordinates)
    is expanded by ``margin`` times its width/height on each side, sampled
    bilinearly onto a ``roi_size`` grid, and returned with intensities in
    [0, 1]. Integer images are divided by 255; float images must already be
    in [0, 1].
    """
    img = np.asarray(image)
    if img.ndim != 2:
        raise FeatureError(f"image must be 2-D grayscale, got shape {img.shape}")
    if np.issubdtype(img.dtype, np.integer):
        img = img.astype(np.float64) / 255.0
    else:
        img = img.astype(np.float64)
        if img.size and (img.min() < -1e-9 or img.max() > 1.0 + 1e-9):
            raise FeatureError("float images must have intensities in [0, 1]")
        img = np.clip(img, 0.0, 1.0)

    pts = np.asarray(landmarks, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4:
        raise FeatureError("need at least 4 landmarks of shape (n, 2)")
    h, w = img.shape
    xs, ys = pts[:, 0], pts[:, 1]
    if xs.min() < 0 or ys.min() < 0 or xs.max() > w - 1 or ys.max() > h - 1:
        raise FeatureError("landmarks fall outside the image")
    x0, x1 = xs.min(), xs.max()
    y0, y1 = ys.min(), ys.max()
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        raise FeatureError("degenerate landmark bounding box (zero area)")
    x0, x1 = x0 - margin * (x1 - x0), x1 + margin * (x1 - x0)
    y0, y1 = y0 - margin * (y1 - y0), y1 + margin * (y1 - y0)

    roi_h, roi_w = roi_size
    grid_y = np.linspace(y0, y1, roi_h)
    grid_x = np.linspace(x0, x1, roi_w)
    return _bilinear_sample(img, grid_y, grid_x)


def _bilinear_sample(img, grid_y, grid_x):
    """Sample img at the outer product of grid_y x grid_x with edge clamping."""
    h, w = img.shape
    ys = np.clip(grid_y, 0.0, h - 1.0)
    xs = np.clip(grid_x, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = img[np.ix_(y0, x0)] * (1 - fx) + img[np.ix_(y0, x1)] * fx
    bot = img[np.ix_(y1, x0)] * (1 - fx) + img[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


# ---------------------------------------------------------------------------
# DCT coding
# ---------------------------------------------------------------------------

def dct2d(roi):
    """Orthonormal type-II 2-D DCT of a single ROI."""
    arr = np.asarray(roi, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise FeatureError(f"ROI must be a non-empty 2-D grid, got {arr.shape}")
    return scipy.fft.dctn(arr, type=2, norm="ortho")


def idct2d(coefficients):
    """Inverse of :func:`dct2d`."""
    arr = np.asarray(coefficients, dtype=np.float64)
    return scipy.fft.idctn(arr, type=2, norm="ortho")


@lru_cache(maxsize=None)
def zigzag_indices(height: int, width: int):
    """Anti-diagonal traversal order starting at DC, JPEG-style.

    Odd diagonals run top-right to bottom-left, even diagonals the reverse.
    """
    order = []
    for s in range(height + width - 1):
        lo = max(0, s - width + 1)
        hi = min(s, height - 1)
        rows = range(lo, hi + 1) if s % 2 == 1 else range(hi, lo - 1, -1)
        order.extend((i, s - i) for i in rows)
    rows = np.array([ij[0] for ij in order])
    cols = np.array([ij[1] for ij in order])
    return rows, cols


def select_coefficients(grid, k: int):
    """First ``k`` DCT coefficients in zig-zag order (DC first)."""
    arr = np.asarray(grid, dtype=np.float64)
    h, w = arr.shape
    if not 1 <= k <= h * w:
        raise FeatureError(f"k must lie in [1, {h * w}], got {k}")
    rows, cols = zigzag_indices(h, w)
    return arr[rows[:k], cols[:k]]


def dct_features(rois, k: int = DEFAULT_NUM_COEFFICIENTS):
    """Per-frame zig-zag DCT coefficients for a stack of ROIs (T, H, W)."""
    stack = np.asarray(rois, dtype=np.float64)
    if stack.ndim != 3:
        raise FeatureError(f"expected ROI stack of shape (T, H, W), got {stack.shape}")
    return np.stack([select_coefficients(dct2d(roi), k) for roi in stack])


# ---------------------------------------------------------------------------
# temporal stacking and early fusion
# ---------------------------------------------------------------------------

def temporal_stack(frames, window: int = DEFAULT_WINDOW):
    """Concatenate each frame with its neighbours over an odd-width window.

    Edges are replicated, so the output has the same frame count and
    ``window`` times the input dimension.
    """
    if window < 1 or window % 2 == 0:
        raise FeatureError(f"window must be an odd integer >= 1, got {window}")
    arr = check_array_2d(frames, name="frames")
    if arr.shape[0] == 0:
        raise FeatureError("empty frame sequence")
    if window == 1:
        return arr.copy()
    half = (window - 1) // 2
    t = arr.shape[0]
    cols = []
    for offset in range(-half, half + 1):
        idx = np.clip(np.arange(t) + offset, 0, t - 1)
        cols.append(arr[idx])
    return np.concatenate(cols, axis=1)


class EarlyFusion(BaseEstimator, TransformerMixin):
    """Standardize descriptor streams on training data, then concatenate.

    Each part is z-scored column-wise using statistics estimated by ``fit``
    (population variance); constant columns pass through unscaled. Parts must
    agree on frame count within a call.
    """

    def __init__(self, epsilon=1e-12):
        self.epsilon = epsilon

    def fit(self, parts, y=None):
        parts = self._check_parts(parts)
        self.means_ = [p.mean(axis=0) for p in parts]
        self.scales_ = []
        for p in parts:
            std = p.std(axis=0)
            std = np.where(std <= self.epsilon, 1.0, std)
            self.scales_.append(std)
        self.dimensions_ = [p.shape[1] for p in parts]
        return self

    def transform(self, parts):
        if not hasattr(self, "means_"):
            raise NotFittedError("EarlyFusion must be fitted before transform")
        parts = self._check_parts(parts)
        if [p.shape[1] for p in parts] != self.dimensions_:
            raise FeatureError(
                f"part dimensions {[p.shape[1] for p in parts]} do not match "
                f"fitted dimensions {self.dimensions_}"
            )
        fused = [
            (p - mean) / scale
            for p, mean, scale in zip(parts, self.means_, self.scales_)
        ]
        return np.concatenate(fused, axis=1)

    @staticmethod
    def _check_parts(parts):
        if not parts:
            raise FeatureError("no descriptor streams given")
        arrs = [check_array_2d(p, name=f"part[{i}]") for i, p in enumerate(parts)]
        lengths = {a.shape[0] for a in arrs}
        if len(lengths) != 1:
            raise FeatureError(f"streams disagree on frame count: {sorted(lengths)}")
        if 0 in lengths:
            raise FeatureError("descriptor streams have no frames")
        return arrs


class DctFeaturizer(BaseEstimator, TransformerMixin):
    """sklearn-style wrapper: ROI stacks to zig-zag DCT coefficient frames."""

    def __init__(self, num_coefficients=DEFAULT_NUM_COEFFICIENTS):
        self.num_coefficients = num_coefficients

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return dct_features(X, self.num_coefficients)


# ---------------------------------------------------------------------------
# feature files
# ---------------------------------------------------------------------------

def write_feature_file(path, frames, layout, fingerprint: str = "") -> None:
    """Write float32 feature frames with a layout header.

    ``layout`` is a list of ``{"name": ..., "dim": ..., "kind": ...}`` parts
    where kind is one of ``dct``, ``temporal``, ``external``.
    """
    arr = np.ascontiguousarray(np.asarray(frames, dtype=np.float32))
    if arr.ndim != 2:
        raise FeatureError(f"feature frames must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise FeatureError("feature frames contain non-finite values")
    layout_dims = sum(int(part["dim"]) for part in layout)
    if layout_dims != arr.shape[1]:
        raise FeatureError(
            f"layout dims sum to {layout_dims} but frames have {arr.shape[1]}"
        )
    header = {
        "frames": int(arr.shape[0]),
        "dimension": int(arr.shape[1]),
        "layout": layout,
        "fingerprint": fingerprint,
    }
    atomic_write_bytes(path, pack_container(FEATURE_MAGIC, header, {"frames": arr}))


def read_feature_file(path):
    """Read a feature file, returning (float64 frames, header dict)."""
    header, arrays = read_container(path, FEATURE_MAGIC)
    frames = arrays["frames"].astype(np.float64)
    if frames.shape != (header["frames"], header["dimension"]):
        raise FeatureError(f"{path}: header does not match stored frame block")
    return frames, header
