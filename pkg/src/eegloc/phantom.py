"""Synthetic T1/UTE head phantoms with known electrode positions.

The head is an ellipsoid. Electrodes are solid spheres centred on its
surface along the template directions; they are painted into the UTE volume
only, so the T1 carries no electrode contrast. Edges are partial-volume
blended over one voxel.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ElectrodeOverlap, IoFailure, MissingFile, ValidationError
from .registration import FIDUCIAL_NAMES, load_template
from .volume_io import Volume3D, write_nifti


@dataclass
class PhantomSpec:
    spacing: tuple = (1.0, 1.0, 1.0)
    dims: tuple = None
    head_center_mm: tuple = (0.0, 0.0, 0.0)
    semi_axes_mm: tuple = (90.0, 110.0, 80.0)
    electrode_radius_mm: float = 6.0
    n_electrodes: int = 65
    t1_bg: float = 20.0
    t1_head: float = 120.0
    ute_bg: float = 10.0
    ute_head: float = 60.0
    ute_electrode: float = 200.0
    t1_noise_sigma: float = 5.0
    ute_noise_sigma: float = 10.0
    cap_perturbation_mm: float = 2.0
    rng_seed: int = 0
    erased: list = field(default_factory=list)

    def __post_init__(self):
        self.spacing = tuple(float(v) for v in self.spacing)
        self.head_center_mm = tuple(float(v) for v in self.head_center_mm)
        self.semi_axes_mm = tuple(float(v) for v in self.semi_axes_mm)
        if self.dims is not None:
            self.dims = tuple(int(v) for v in self.dims)
        self.erased = list(self.erased)
        if min(self.semi_axes_mm) <= self.electrode_radius_mm:
            raise ValidationError("semi-axes must exceed the electrode radius", stage="phantom")
        if not self.ute_electrode > self.ute_head:
            raise ValidationError("ute_electrode must be brighter than ute_head", stage="phantom")
        if self.n_electrodes < 5:
            raise ValidationError("n_electrodes must be >= 5", stage="phantom")
        if min(self.spacing) <= 0 or self.electrode_radius_mm <= 0:
            raise ValidationError("spacing and electrode radius must be positive", stage="phantom")
        if self.t1_noise_sigma < 0 or self.ute_noise_sigma < 0 or self.cap_perturbation_mm < 0:
            raise ValidationError("noise and perturbation must be >= 0", stage="phantom")

    @classmethod
    def from_json(cls, obj):
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"unknown phantom spec keys: {sorted(unknown)}", stage="phantom")
        return cls(**obj)

    def to_json(self):
        return asdict(self)

    def grid(self):
        """Dimensions and axis-aligned affine with the head centred in the grid."""
        sp = np.array(self.spacing)
        if self.dims is None:
            margin = 2 * self.electrode_radius_mm + 4.0
            dims = tuple(int(v) for v in 2 * np.ceil((np.array(self.semi_axes_mm) + margin) / sp) + 1)
        else:
            dims = self.dims
        origin = np.array(self.head_center_mm) - (np.array(dims) - 1) / 2.0 * sp
        affine = np.diag([*sp, 1.0])
        affine[:3, 3] = origin
        return dims, affine


@dataclass(eq=False)
class Phantom:
    t1: Volume3D
    ute: Volume3D
    truth: dict
    fiducials: dict
    spec: PhantomSpec


def surface_point(direction, center, semi_axes):
    """Where the ray from ``center`` along ``direction`` leaves the ellipsoid."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d, axis=-1, keepdims=True)
    rho = 1.0 / np.sqrt(((d / np.asarray(semi_axes)) ** 2).sum(axis=-1))
    return np.asarray(center) + d * np.asarray(rho)[..., None]


def _ellipsoid_occupancy(coords, center, semi_axes):
    rel = coords - center
    scaled = rel / semi_axes
    g = np.sqrt((scaled ** 2).sum(axis=-1))
    grad = np.sqrt(((scaled / semi_axes) ** 2).sum(axis=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        signed = np.where(g > 0, (g - 1.0) * g / np.maximum(grad, 1e-12), -np.inf)
    return np.clip(0.5 - signed, 0.0, 1.0)


def _head_volume(dims, affine, center, semi_axes, bg, fg):
    out = np.empty(dims, dtype=np.float64)
    ii, jj = np.meshgrid(np.arange(dims[0]), np.arange(dims[1]), indexing="ij")
    for k in range(dims[2]):
        idx = np.stack([ii, jj, np.full_like(ii, k)], axis=-1).astype(np.float64)
        coords = idx @ affine[:3, :3].T + affine[:3, 3]
        out[:, :, k] = bg + (fg - bg) * _ellipsoid_occupancy(coords, center, semi_axes)
    return out


def _paint_sphere(data, affine, center, radius, value):
    inv = np.linalg.inv(affine[:3, :3])
    c_idx = inv @ (center - affine[:3, 3])
    reach = np.abs(inv).sum(axis=1) * (radius + 1.0)
    lo = np.maximum(np.floor(c_idx - reach).astype(int), 0)
    hi = np.minimum(np.ceil(c_idx + reach).astype(int) + 1, data.shape)
    if np.any(hi <= lo):
        return
    box = tuple(slice(a, b) for a, b in zip(lo, hi))
    grid = np.stack(np.meshgrid(*[np.arange(a, b) for a, b in zip(lo, hi)], indexing="ij"), axis=-1)
    coords = grid @ affine[:3, :3].T + affine[:3, 3]
    occ = np.clip(radius + 0.5 - np.linalg.norm(coords - center, axis=-1), 0.0, 1.0)
    data[box] = data[box] * (1.0 - occ) + value * occ


def place_electrodes(directions, spec: PhantomSpec, rng):
    """Electrode centres on the ellipsoid, jittered tangentially then re-projected."""
    center = np.array(spec.head_center_mm)
    axes = np.array(spec.semi_axes_mm)
    pts = surface_point(directions, center, axes)
    if spec.cap_perturbation_mm > 0:
        normal = (pts - center) / axes ** 2
        normal /= np.linalg.norm(normal, axis=1, keepdims=True)
        jitter = rng.normal(0.0, spec.cap_perturbation_mm, size=pts.shape)
        jitter -= (jitter * normal).sum(axis=1, keepdims=True) * normal
        pts = surface_point(pts + jitter - center, center, axes)
    return pts


def generate_phantom(spec: PhantomSpec = None, template=None) -> Phantom:
    spec = spec or PhantomSpec()
    template = template or load_template()
    if spec.n_electrodes > template.n_channels:
        raise ValidationError(f"template has only {template.n_channels} channels", stage="phantom")
    labels = template.labels[:spec.n_electrodes]
    directions = template.unit_pos[:spec.n_electrodes]

    seeds = np.random.SeedSequence(spec.rng_seed).spawn(3)
    rng_cap, rng_t1, rng_ute = (np.random.default_rng(s) for s in seeds)
    center = np.array(spec.head_center_mm)
    axes = np.array(spec.semi_axes_mm)

    centers = place_electrodes(directions, spec, rng_cap)
    diff = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
    np.fill_diagonal(diff, np.inf)
    if diff.min() < 2 * spec.electrode_radius_mm:
        a, b = np.unravel_index(np.argmin(diff), diff.shape)
        raise ElectrodeOverlap(f"{labels[a]} and {labels[b]} are {diff[a, b]:.2f} mm apart "
                               f"(< {2 * spec.electrode_radius_mm} mm)")

    dims, affine = spec.grid()
    t1 = _head_volume(dims, affine, center, axes, spec.t1_bg, spec.t1_head)
    ute = _head_volume(dims, affine, center, axes, spec.ute_bg, spec.ute_head)
    erased = set(spec.erased)
    for label, c in zip(labels, centers):
        if label not in erased:
            _paint_sphere(ute, affine, c, spec.electrode_radius_mm, spec.ute_electrode)

    if spec.t1_noise_sigma > 0:
        t1 += rng_t1.normal(0.0, spec.t1_noise_sigma, size=dims)
    if spec.ute_noise_sigma > 0:
        ute += rng_ute.normal(0.0, spec.ute_noise_sigma, size=dims)

    fid_pts = surface_point(template.fiducial_array(), center, axes)
    return Phantom(
        t1=Volume3D(t1.astype(np.float32), affine, "f32"),
        ute=Volume3D(ute.astype(np.float32), affine, "f32"),
        truth={label: c.copy() for label, c in zip(labels, centers)},
        fiducials={name: p.copy() for name, p in zip(FIDUCIAL_NAMES, fid_pts)},
        spec=spec,
    )


def perturb_ground_truth(points: dict, sigma_mm: float, seed=0) -> dict:
    """Isotropic Gaussian jitter per point, deterministic for a given seed."""
    if sigma_mm < 0:
        raise ValidationError("sigma_mm must be >= 0", stage="phantom")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma_mm, size=(len(points), 3)) if sigma_mm > 0 else np.zeros((len(points), 3))
    return {label: np.asarray(p, dtype=np.float64) + n for (label, p), n in zip(points.items(), noise)}


def write_points_csv(points: dict, path):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", "x_mm", "y_mm", "z_mm"])
            for label, p in points.items():
                w.writerow([label, *(repr(float(v)) for v in p)])
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_points_csv(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"label", "x_mm", "y_mm", "z_mm"} - set(reader.fieldnames or [])
        if missing:
            raise ValidationError(f"{path.name}: missing columns {sorted(missing)}", stage="csv")
        return {r["label"]: np.array([float(r["x_mm"]), float(r["y_mm"]), float(r["z_mm"])]) for r in reader}


def write_phantom(ph: Phantom, out_dir):
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out}: {exc}", stage="phantom") from exc
    write_nifti(ph.t1, out / "t1.nii")
    write_nifti(ph.ute, out / "ute.nii")
    write_points_csv(ph.truth, out / "truth.csv")
    write_points_csv(ph.fiducials, out / "fiducials.csv")
    (out / "phantom_spec.json").write_text(json.dumps(ph.spec.to_json(), indent=2, sort_keys=True) + "\n")
    return out
