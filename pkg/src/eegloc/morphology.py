"""Head mask extraction and the scalp shell that bounds the electrode search.

Distances are measured in world millimetres using the voxel spacing, so the
structuring elements stay spherical on anisotropic grids. Voxels outside the
grid are background for every operation here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConstantVolume, EmptyHeadMask, NegativeRadius, NoForeground
from .volume_io import Volume3D

DEFAULT_OUTER_MARGIN_MM = 15.0
DEFAULT_INNER_MARGIN_MM = 2.0
HISTOGRAM_BINS = 256


@dataclass(eq=False)
class BinaryMask:
    """Boolean voxel grid sharing geometry with a :class:`Volume3D`."""

    bits: np.ndarray
    affine: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        self.affine = np.asarray(self.affine, dtype=np.float64)
        self._count = None

    @classmethod
    def like(cls, vol, bits):
        return cls(bits, vol.affine.copy())

    @property
    def dims(self):
        return tuple(int(n) for n in self.bits.shape)

    @property
    def spacing(self):
        return tuple(float(v) for v in np.linalg.norm(self.affine[:3, :3], axis=0))

    def voxel_count(self) -> int:
        if self._count is None:
            self._count = int(np.count_nonzero(self.bits))
        return self._count

    def same_grid(self, other) -> bool:
        return self.dims == tuple(other.dims) and np.allclose(self.affine, other.affine, atol=1e-6)

    def to_volume(self) -> Volume3D:
        return Volume3D(self.bits.astype(np.float32), self.affine.copy(), "u8")

    @classmethod
    def from_volume(cls, vol: Volume3D):
        return cls(vol.data > 0.5, vol.affine.copy())


def otsu_threshold(vol) -> float:
    """Threshold maximising between-class variance on a 256-bin histogram.

    Returns the upper edge of the last bin assigned to the background class,
    so ``data > threshold`` selects the foreground.
    """
    data = np.asarray(vol.data if hasattr(vol, "data") else vol, dtype=np.float64).ravel()
    lo, hi = float(data.min()), float(data.max())
    if not hi > lo:
        raise ConstantVolume(f"volume is constant ({lo}); no threshold exists")
    counts, edges = np.histogram(data, bins=HISTOGRAM_BINS, range=(lo, hi))
    centers = 0.5 * (edges[:-1] + edges[1:])
    counts = counts.astype(np.float64)

    w0 = np.cumsum(counts)[:-1]
    w1 = counts.sum() - w0
    m0 = np.cumsum(counts * centers)[:-1]
    m1 = (counts * centers).sum() - m0
    valid = (w0 > 0) & (w1 > 0)
    between = np.zeros_like(w0)
    between[valid] = w0[valid] * w1[valid] * (m0[valid] / w0[valid] - m1[valid] / w1[valid]) ** 2
    # plateaus of equal variance: take the middle split for symmetric behaviour
    best = np.flatnonzero(between == between.max())
    split = best[len(best) // 2]
    return float(edges[split + 1])


def _ball_offsets(radius_mm, spacing):
    """Integer voxel offsets within ``radius_mm`` (world metric)."""
    reach = [int(math.floor(radius_mm / s + 1e-9)) for s in spacing]
    grids = np.meshgrid(*[np.arange(-r, r + 1) for r in reach], indexing="ij")
    dist2 = sum((g * s) ** 2 for g, s in zip(grids, spacing))
    return dist2 <= radius_mm * radius_mm + 1e-9


def dilate(mask: BinaryMask, radius_mm: float) -> BinaryMask:
    """Voxels whose world distance to the mask is at most ``radius_mm``."""
    if radius_mm < 0:
        raise NegativeRadius(f"dilation radius must be >= 0, got {radius_mm}")
    if radius_mm == 0 or not mask.bits.any():
        return BinaryMask(mask.bits.copy(), mask.affine.copy())
    dist = ndimage.distance_transform_edt(~mask.bits, sampling=mask.spacing)
    return BinaryMask(dist <= radius_mm + 1e-9, mask.affine.copy())


def erode(mask: BinaryMask, radius_mm: float) -> BinaryMask:
    """Voxels whose world distance to the background exceeds ``radius_mm``.

    Background includes everything outside the grid.
    """
    if radius_mm < 0:
        raise NegativeRadius(f"erosion radius must be >= 0, got {radius_mm}")
    if radius_mm == 0 or not mask.bits.any():
        return BinaryMask(mask.bits.copy(), mask.affine.copy())
    pad = [int(math.ceil(radius_mm / s)) + 1 for s in mask.spacing]
    padded = np.pad(mask.bits, [(p, p) for p in pad], constant_values=False)
    dist = ndimage.distance_transform_edt(padded, sampling=mask.spacing)
    inner = dist > radius_mm + 1e-9
    crop = tuple(slice(p, p + n) for p, n in zip(pad, mask.dims))
    return BinaryMask(inner[crop], mask.affine.copy())


def largest_component(bits):
    """Largest 26-connected component of a boolean array (lowest label on ties)."""
    labels, n = ndimage.label(bits, structure=np.ones((3, 3, 3), dtype=bool))
    if n == 0:
        return np.zeros_like(bits, dtype=bool)
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return labels == int(np.argmax(sizes))


def fill_holes(bits):
    """Set background regions not connected (6-connectivity) to the grid border."""
    bits = np.asarray(bits, dtype=bool)
    labels, n = ndimage.label(~bits)
    if n == 0:
        return bits.copy()
    border = np.zeros(n + 1, dtype=bool)
    for axis in range(bits.ndim):
        border[np.unique(np.take(labels, 0, axis=axis))] = True
        border[np.unique(np.take(labels, -1, axis=axis))] = True
    border[0] = False
    return ~border[labels]


def _fill_holes(bits):
    filled = fill_holes(bits)
    for axis in range(3):
        moved = np.moveaxis(filled, axis, 0)
        for k in range(moved.shape[0]):
            if moved[k].any():
                moved[k] = fill_holes(moved[k])
    return fill_holes(filled)


def extract_head_mask(t1: Volume3D) -> BinaryMask:
    """Otsu binarisation, largest component, radius-2 closing, hole filling."""
    threshold = otsu_threshold(t1)
    fg = t1.data > threshold
    if not fg.any():
        raise NoForeground(f"no voxel above Otsu threshold {threshold:.4g}")
    head = largest_component(fg)

    ball = _ball_offsets(2.0, (1.0, 1.0, 1.0))
    pad = 3
    padded = np.pad(head, pad, constant_values=False)
    closed = ndimage.binary_erosion(ndimage.binary_dilation(padded, ball), ball, border_value=0)
    head = closed[pad:-pad, pad:-pad, pad:-pad] | head
    head = _fill_holes(head)
    return BinaryMask(head, t1.affine.copy())


def build_voi_shell(head: BinaryMask, outer_margin_mm=DEFAULT_OUTER_MARGIN_MM,
                    inner_margin_mm=DEFAULT_INNER_MARGIN_MM) -> BinaryMask:
    """Band from ``inner_margin_mm`` inside the scalp to ``outer_margin_mm`` outside."""
    if head.voxel_count() == 0:
        raise EmptyHeadMask("head mask is empty; cannot build the electrode shell")
    if outer_margin_mm < 0 or inner_margin_mm < 0:
        raise NegativeRadius(f"margins must be >= 0, got outer={outer_margin_mm} inner={inner_margin_mm}",
                             stage="voi")
    outer = dilate(head, outer_margin_mm)
    inner = erode(head, inner_margin_mm)
    return BinaryMask(outer.bits & ~inner.bits, head.affine.copy())


def mask_centroid(mask: BinaryMask):
    """World-mm centroid of the set voxels."""
    idx = np.argwhere(mask.bits).mean(axis=0)
    return idx @ mask.affine[:3, :3].T + mask.affine[:3, 3]
