"""Per-image measures on luminance rasters.

Seven measures are computed for every phenotype image: histogram entropy
and energy, two morphological counts (boundary contours and Euler number),
two complexity measures (compression ratio and high-pass structural
complexity) and the box-counting fractal dimension.  All operate on a
single-channel float raster in [0, 1]; ``to_luminance`` converts inputs.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
import scipy.ndimage as ndi
from PIL import Image

from .errors import DataError, NumericError

MEASURE_FIELDS = ("entropy", "energy", "contours", "euler", "acomplex", "scomplex", "fdim")

# Rec.709 luma coefficients
_LUMA = np.array([0.2126, 0.7152, 0.0722])

_EIGHT_CONN = np.ones((3, 3), dtype=int)
_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=int)


@dataclass(frozen=True)
class SComplexParams:
    """Coarse-grain radius (pixels) and per-pixel difference threshold."""

    r_cg: int = 5
    delta: float = 0.23

    def __post_init__(self):
        if self.r_cg < 1:
            raise ValueError(f"r_cg must be a positive integer, got {self.r_cg}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0,1), got {self.delta}")


@dataclass(frozen=True)
class MeasureRecord:
    entropy: float
    energy: float
    contours: int
    euler: int
    acomplex: float
    scomplex: float
    fdim: float

    def as_tuple(self):
        return tuple(getattr(self, f) for f in MEASURE_FIELDS)


def to_luminance(image) -> np.ndarray:
    """Convert an image (PIL image or HxW / HxWx3 / HxWx4 array) to a
    float64 luminance raster in [0, 1].  RGB uses Rec.709 luma weights."""
    if isinstance(image, Image.Image):
        image = np.asarray(image.convert("RGB") if image.mode not in ("L", "I", "F") else image)
    arr = np.asarray(image)
    if arr.ndim not in (2, 3) or arr.size == 0:
        raise DataError(f"not a decodable raster: shape {arr.shape}")
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    elif arr.dtype == np.uint16:
        arr = arr.astype(np.float64) / 65535.0
    else:
        arr = arr.astype(np.float64)
    if arr.ndim == 3:
        if arr.shape[2] == 4:
            arr = arr[:, :, :3]
        if arr.shape[2] != 3:
            raise DataError(f"unsupported channel count: {arr.shape[2]}")
        arr = arr @ _LUMA
    return np.clip(arr, 0.0, 1.0)


def load_image(path, size: int = 512) -> np.ndarray:
    """Decode an image file and return its luminance raster resized to
    ``size`` x ``size`` by area averaging (``size=None`` keeps dimensions)."""
    try:
        with Image.open(path) as im:
            im.load()
            if size is not None:
                im = im.convert("RGB").resize((size, size), Image.Resampling.BOX)
            return to_luminance(im)
    except (OSError, SyntaxError) as exc:
        raise DataError(f"cannot decode image {path}: {exc}") from exc


def _check_raster(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise DataError(f"expected a nonempty 2-D raster, got shape {arr.shape}")
    return arr


def _histogram(img: np.ndarray) -> np.ndarray:
    """Probabilities over 256 uniform intensity bins of [0, 1]."""
    q = np.clip((img * 256.0).astype(np.int64), 0, 255)
    counts = np.bincount(q.ravel(), minlength=256)
    return counts / counts.sum()


def entropy(img) -> float:
    """Shannon entropy (bits) of the 256-bin intensity histogram."""
    p = _histogram(_check_raster(img))
    nz = p[p > 0]
    return float(-np.sum(nz * np.log2(nz)))


def energy(img) -> float:
    """Sum of squared probabilities of the 256-bin intensity histogram."""
    p = _histogram(_check_raster(img))
    return float(np.sum(p * p))


def otsu_threshold(img) -> float:
    """Otsu's threshold on the 256-bin luminance histogram.

    Returns a value in (0, 1]; a constant raster yields a threshold above
    its single intensity so the foreground mask comes out empty.
    """
    arr = _check_raster(img)
    counts = np.bincount(np.clip((arr * 256.0).astype(np.int64), 0, 255).ravel(), minlength=256)
    total = counts.sum()
    occupied = np.flatnonzero(counts)
    if len(occupied) == 1:
        return min((occupied[0] + 1) / 256.0, 1.0)
    p = counts / total
    centers = (np.arange(256) + 0.5) / 256.0
    w0 = np.cumsum(p)
    mu = np.cumsum(p * centers)
    mu_t = mu[-1]
    w1 = 1.0 - w0
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_b = (mu_t * w0 - mu) ** 2 / (w0 * w1)
    sigma_b[~np.isfinite(sigma_b)] = -1.0
    t = int(np.argmax(sigma_b))
    # foreground = bins strictly above t; bin t+1 starts at (t+1)/256
    return (t + 1) / 256.0


def binarize(img, threshold: float) -> np.ndarray:
    """Foreground mask: pixel >= threshold.  Threshold must lie in (0, 1)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0,1), got {threshold}")
    return _check_raster(img) >= threshold


def _foreground_mask(img: np.ndarray) -> np.ndarray:
    return img >= otsu_threshold(img)


def _components_and_holes(mask: np.ndarray) -> tuple[int, int]:
    """Foreground components (8-connectivity) and holes (4-connected
    background regions not touching the border)."""
    n_comp = ndi.label(mask, structure=_EIGHT_CONN)[1]
    bg_labels, n_bg = ndi.label(~mask, structure=_FOUR_CONN)
    if n_bg == 0:
        return n_comp, 0
    border = np.unique(
        np.concatenate(
            [bg_labels[0, :], bg_labels[-1, :], bg_labels[:, 0], bg_labels[:, -1]]
        )
    )
    n_open = len(border[border > 0])
    return n_comp, n_bg - n_open


def contours(img) -> int:
    """Number of closed boundary curves (outer boundaries plus hole
    boundaries) of the Otsu-binarized foreground."""
    n_comp, n_holes = _components_and_holes(_foreground_mask(_check_raster(img)))
    return n_comp + n_holes


def euler(img) -> int:
    """Morphological Euler number: foreground components minus holes."""
    n_comp, n_holes = _components_and_holes(_foreground_mask(_check_raster(img)))
    return n_comp - n_holes


def acomplex(img) -> float:
    """Compression-ratio complexity: deflate (level 9) over the row-major
    8-bit luminance bytes, clamped to [0, 1]."""
    arr = _check_raster(img)
    raw = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8).tobytes()
    return min(len(zlib.compress(raw, 9)) / len(raw), 1.0)


def _disk_kernel(radius: int) -> np.ndarray:
    yy, xx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    mask = (yy * yy + xx * xx) <= radius * radius
    return mask / mask.sum()


def scomplex(img, params: SComplexParams = SComplexParams()) -> float:
    """Structural complexity: fraction of pixels whose absolute difference
    from the disk-mean coarse-grained raster exceeds ``params.delta``."""
    arr = _check_raster(img)
    if min(arr.shape) <= 2 * params.r_cg:
        raise DataError(
            f"raster {arr.shape} too small for coarse-grain radius {params.r_cg}"
        )
    coarse = ndi.convolve(arr, _disk_kernel(params.r_cg), mode="reflect")
    return float(np.mean(np.abs(arr - coarse) > params.delta))


def _box_count(mask: np.ndarray, size: int) -> int:
    """Number of size x size grid boxes containing at least one set pixel."""
    h, w = mask.shape
    sums = np.add.reduceat(
        np.add.reduceat(mask, np.arange(0, h, size), axis=0),
        np.arange(0, w, size),
        axis=1,
    )
    return int(np.count_nonzero(sums))


def fractal_dim(img) -> float:
    """Box-counting dimension of the Otsu-binarized foreground.

    Least-squares slope of log N(s) against log(1/s) for box sizes
    s = 2, 4, 8, ... up to min(W, H)/4.  Empty foreground is defined as 0.
    """
    arr = _check_raster(img)
    mask = _foreground_mask(arr)
    if not mask.any():
        return 0.0
    limit = min(arr.shape) // 4
    sizes = []
    s = 2
    while s <= limit:
        sizes.append(s)
        s *= 2
    if len(sizes) < 2:
        raise NumericError(f"raster {arr.shape} too small for box counting")
    counts = np.array([_box_count(mask, s) for s in sizes], dtype=np.float64)
    return float(np.polyfit(np.log(1.0 / np.asarray(sizes)), np.log(counts), 1)[0])


def measure_all(img, params: SComplexParams = SComplexParams()) -> MeasureRecord:
    """All seven measures of a raster (converted to luminance first)."""
    lum = to_luminance(img) if np.asarray(img).ndim == 3 else _check_raster(img)
    n_comp, n_holes = _components_and_holes(_foreground_mask(lum))
    return MeasureRecord(
        entropy=entropy(lum),
        energy=energy(lum),
        contours=n_comp + n_holes,
        euler=n_comp - n_holes,
        acomplex=acomplex(lum),
        scomplex=scomplex(lum, params),
        fdim=fractal_dim(lum),
    )
