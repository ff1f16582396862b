"""Spherical Hough transform restricted to the scalp shell.

Each edge voxel casts one integer vote per radius at ``p + r*g`` and one at
``p - r*g`` (``g`` the unit gradient), so bright and dark blobs both
produce a peak. Votes from all radii share one centre accumulator; the
radius of a detected sphere is recovered afterwards from the votes that
landed next to its centre.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import EmptyVoi, GeometryMismatch, VolumeTooSmall
from .volume_io import voxel_to_world


@dataclass(frozen=True)
class HoughParams:
    r_min_mm: float = 3.0
    r_max_mm: float = 9.0
    r_step_mm: float = 1.0
    grad_threshold_frac: float = 0.30
    nms_min_dist_mm: float = 10.0
    max_candidates: int = 200
    # peaks scoring below this fraction of the best peak are dropped; 0 keeps all
    min_score_frac: float = 0.25

    def __post_init__(self):
        if not 0 < self.r_min_mm <= self.r_max_mm:
            raise ValueError(f"need 0 < r_min <= r_max, got {self.r_min_mm}, {self.r_max_mm}")
        if not self.r_step_mm > 0:
            raise ValueError("r_step_mm must be > 0")
        if not 0 < self.grad_threshold_frac < 1:
            raise ValueError("grad_threshold_frac must lie in (0, 1)")
        if not self.nms_min_dist_mm > 0:
            raise ValueError("nms_min_dist_mm must be > 0")
        if int(self.max_candidates) < 1:
            raise ValueError("max_candidates must be a positive integer")
        if not 0 <= self.min_score_frac < 1:
            raise ValueError("min_score_frac must lie in [0, 1)")

    def radii(self):
        n = int(math.floor((self.r_max_mm - self.r_min_mm) / self.r_step_mm + 1e-9)) + 1
        return self.r_min_mm + self.r_step_mm * np.arange(n, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class SphereCandidate:
    center: np.ndarray
    radius_mm: float
    score: int


@dataclass
class VoteField:
    """Raw Hough accumulator over a crop of the input grid."""

    acc: np.ndarray
    offset: tuple
    points: np.ndarray
    steps: np.ndarray
    radii: np.ndarray
    n_out: int

    @property
    def n_edges(self):
        return len(self.points)


def gradient(vol):
    """Central differences in mm^-1, one-sided at the borders.

    Returns an array of shape ``(nx, ny, nz, 3)``.
    """
    if min(vol.dims) < 3:
        raise VolumeTooSmall(f"gradient needs at least 3 voxels per axis, got {vol.dims}")
    return _gradient(vol.data, vol.spacing)


def _gradient(data, spacing):
    parts = np.gradient(data.astype(np.float64), *spacing, edge_order=1)
    return np.stack(parts, axis=-1)


def _check_inputs(ute, voi):
    if not voi.same_grid(ute):
        raise GeometryMismatch(f"UTE grid {ute.dims} and VOI grid {voi.dims} differ")
    if voi.voxel_count() == 0:
        raise EmptyVoi("volume of interest contains no voxels")
    if min(ute.dims) < 3:
        raise VolumeTooSmall(f"volume needs at least 3 voxels per axis, got {ute.dims}")


def _crop_box(voi_bits, spacing, r_max):
    idx = np.argwhere(voi_bits)
    lo, hi = idx.min(axis=0), idx.max(axis=0) + 1
    margin = np.array([int(math.ceil(r_max / s)) + 2 for s in spacing])
    lo = np.maximum(lo - margin, 0)
    hi = np.minimum(hi + margin, voi_bits.shape)
    return tuple(int(v) for v in lo), tuple(slice(a, b) for a, b in zip(lo, hi))


def cast_votes(ute, voi, params: HoughParams, workers=1, backend=None) -> VoteField:
    """Edge extraction and gradient-direction voting."""
    _check_inputs(ute, voi)
    impl = kernels.get_backend(backend)
    spacing = np.asarray(ute.spacing)
    radii = params.radii()
    offset, box = _crop_box(voi.bits, spacing, float(radii[-1]))
    sub = ute.data[box]
    inside = voi.bits[box]
    shape = sub.shape

    grad = _gradient(sub, spacing) if min(shape) >= 2 else np.zeros(shape + (3,))
    mag = np.sqrt((grad ** 2).sum(axis=-1))
    peak = mag[inside].max()
    if peak > 0:
        edges = inside & (mag >= params.grad_threshold_frac * peak) & (mag > 0)
    else:
        edges = np.zeros_like(inside)
    pts = np.argwhere(edges)
    unit = grad[edges] / mag[edges][:, None]
    points = np.ascontiguousarray(pts, dtype=np.float64)
    steps = np.ascontiguousarray(unit / spacing, dtype=np.float64)

    if workers > 1 and len(points) > workers:
        chunks = np.array_split(np.arange(len(points)), workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(
                lambda ix: impl.cast_votes(shape, points[ix], steps[ix], radii), chunks))
        acc = np.zeros(shape, dtype=np.int32)
        n_out = 0
        for part, out in parts:
            acc += part
            n_out += out
    else:
        acc, n_out = impl.cast_votes(shape, points, steps, radii)
    return VoteField(acc, offset, points, steps, radii, int(n_out))


def _linear_index(idx, dims):
    nx, ny, _ = dims
    idx = idx.astype(np.int64)
    return idx[:, 0] + nx * (idx[:, 1] + ny * idx[:, 2])


def detect_spheres(ute, voi, params: HoughParams = None, workers=1, backend=None):
    """Sphere candidates in the VOI, sorted by descending score.

    Equal scores are ordered by ascending x-fastest linear voxel index.
    """
    params = params or HoughParams()
    impl = kernels.get_backend(backend)
    field = cast_votes(ute, voi, params, workers=workers, backend=backend)
    if field.n_edges == 0:
        return []

    smoothed = impl.box_sum3(np.ascontiguousarray(field.acc))
    peaks = impl.local_maxima(smoothed)
    if len(peaks) == 0:
        return []
    scores = smoothed[peaks[:, 0], peaks[:, 1], peaks[:, 2]].astype(np.int64)
    full = peaks + np.asarray(field.offset)
    order = np.lexsort((_linear_index(full, ute.dims), -scores))
    peaks, full, scores = peaks[order], full[order], scores[order]
    strong = scores >= params.min_score_frac * scores[0]
    peaks, full, scores = peaks[strong], full[strong], scores[strong]
    centers = np.ascontiguousarray(voxel_to_world(ute, full))

    keep = impl.greedy_nms(centers, float(params.nms_min_dist_mm), int(params.max_candidates))
    peaks, centers, scores = peaks[keep], centers[keep], scores[keep]

    radii = field.radii
    labels = np.zeros(field.acc.shape, dtype=np.int32)
    # lower-ranked peaks first so higher-ranked ones own shared neighbours
    for n in range(len(peaks) - 1, -1, -1):
        i, j, k = peaks[n]
        labels[max(i - 1, 0):i + 2, max(j - 1, 0):j + 2, max(k - 1, 0):k + 2] = n + 1
    counts = impl.radius_votes(labels, field.points, field.steps, radii, len(peaks))
    best = np.argmax(counts, axis=1)

    return [
        SphereCandidate(centers[n].copy(), float(radii[best[n]]), int(scores[n]))
        for n in range(len(peaks))
    ]


def non_max_suppression(candidates, min_dist_mm, max_keep=0, backend=None):
    """Greedy suppression on score-sorted candidates.

    ``candidates`` holds :class:`SphereCandidate` objects or ``(center, score)``
    pairs. Sorting is stable, so equal scores keep their input order.
    """
    if not min_dist_mm > 0:
        raise ValueError("min_dist_mm must be > 0")
    if len(candidates) == 0:
        return []
    impl = kernels.get_backend(backend)
    items = list(candidates)
    score = [c.score if isinstance(c, SphereCandidate) else c[1] for c in items]
    order = sorted(range(len(items)), key=lambda n: -score[n])
    centers = np.array([
        (items[n].center if isinstance(items[n], SphereCandidate) else items[n][0]) for n in order
    ], dtype=np.float64).reshape(-1, 3)
    keep = impl.greedy_nms(np.ascontiguousarray(centers), float(min_dist_mm), int(max_keep))
    return [items[order[n]] for n in keep]


CANDIDATE_FIELDS = ["x_mm", "y_mm", "z_mm", "radius_mm", "score"]


def write_candidates_csv(candidates, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CANDIDATE_FIELDS)
        for c in candidates:
            writer.writerow([repr(float(v)) for v in c.center] + [repr(float(c.radius_mm)), int(c.score)])


def read_candidates_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        SphereCandidate(np.array([float(r["x_mm"]), float(r["y_mm"]), float(r["z_mm"])]),
                        float(r["radius_mm"]), int(r["score"]))
        for r in rows
    ]
