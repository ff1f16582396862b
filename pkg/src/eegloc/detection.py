"""End-to-end electrode detection and labelling.

T1 head mask -> scalp shell -> Hough candidates in the UTE -> template ICP
-> one-to-one gated assignment -> local-maximum recovery for the labels
left without a candidate.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import IoFailure, MissingFile, ValidationError
from .hough import HoughParams, SphereCandidate, detect_spheres
from .morphology import (
    DEFAULT_INNER_MARGIN_MM,
    DEFAULT_OUTER_MARGIN_MM,
    BinaryMask,
    build_voi_shell,
    extract_head_mask,
)
from .registration import SimilarityTransform, icp_register
from .volume_io import voxel_to_world, world_to_voxel

SOURCES = ("hough", "local_max")


@dataclass(frozen=True)
class IcpOptions:
    max_iter: int = 100
    tol: float = 1e-6
    with_scale: bool = True
    # correspondence rejection distance for a final ICP stage; None disables it
    reject_mm: float = None

    def __post_init__(self):
        if self.max_iter < 1 or not self.tol > 0:
            raise ValueError("ICP needs max_iter >= 1 and tol > 0")
        if self.reject_mm is not None and not self.reject_mm > 0:
            raise ValueError("reject_mm must be > 0")


@dataclass(frozen=True)
class PipelineConfig:
    outer_margin_mm: float = DEFAULT_OUTER_MARGIN_MM
    inner_margin_mm: float = DEFAULT_INNER_MARGIN_MM
    hough: HoughParams = field(default_factory=HoughParams)
    icp: IcpOptions = field(default_factory=IcpOptions)
    gate_dist_mm: float = 20.0
    refine_radius_mm: float = 10.0
    workers: int = 1

    def __post_init__(self):
        if self.outer_margin_mm < 0 or self.inner_margin_mm < 0:
            raise ValueError("morphology margins must be >= 0")
        if not self.gate_dist_mm > 0 or not self.refine_radius_mm > 0:
            raise ValueError("gate_dist_mm and refine_radius_mm must be > 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}", stage="config")
        try:
            if "hough" in obj:
                obj["hough"] = HoughParams(**obj["hough"])
            if "icp" in obj:
                obj["icp"] = IcpOptions(**obj["icp"])
            return cls(**obj)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"invalid config: {exc}", stage="config") from exc


@dataclass(eq=False)
class LabeledElectrode:
    label: str
    position: np.ndarray
    source: str
    score: float
    assign_dist_mm: float


@dataclass(eq=False)
class LabeledElectrodeSet:
    electrodes: list
    transform: SimilarityTransform
    config: PipelineConfig
    icp_residual_mm: float = float("nan")
    n_candidates: int = 0

    @property
    def labels(self):
        return [e.label for e in self.electrodes]

    def positions(self):
        return {e.label: e.position for e in self.electrodes}


@dataclass(frozen=True, eq=False)
class RefineResult:
    position: np.ndarray
    value: float
    fallback: bool


def _candidate_centers(candidates):
    return np.array([c.center if isinstance(c, SphereCandidate) else c for c in candidates],
                    dtype=np.float64).reshape(-1, 3)


def assign_candidates(registered, candidates, gate_dist_mm):
    """Greedy one-to-one matching of labels to candidates within a distance gate.

    ``registered`` maps label -> registered template position (iteration order
    is template order). Pairs are taken by ascending distance, then label
    order, then candidate index. Returns label -> (candidate index or None,
    distance or None).
    """
    labels = list(registered)
    result = {label: (None, None) for label in labels}
    if not labels or len(candidates) == 0:
        return result
    pos = np.array([registered[label] for label in labels], dtype=np.float64)
    cand = _candidate_centers(candidates)
    dist = np.linalg.norm(pos[:, None, :] - cand[None, :, :], axis=-1)
    li, ci = np.nonzero(dist <= gate_dist_mm)
    order = np.lexsort((ci, li, dist[li, ci]))
    used_l = np.zeros(len(labels), dtype=bool)
    used_c = np.zeros(len(cand), dtype=bool)
    for n in order:
        a, b = li[n], ci[n]
        if used_l[a] or used_c[b]:
            continue
        used_l[a] = used_c[b] = True
        result[labels[a]] = (int(b), float(dist[a, b]))
    return result


def refine_local_max(ute, voi, center, radius_mm) -> RefineResult:
    """Brightest VOI voxel within ``radius_mm`` of ``center``.

    Ties go to the lowest x-fastest linear index. With no VOI voxel in range
    the centre itself comes back with ``fallback=True``.
    """
    if not radius_mm > 0:
        raise ValueError("radius_mm must be > 0")
    center = np.asarray(center, dtype=np.float64)
    c_idx = world_to_voxel(ute, center)
    inv = np.linalg.inv(ute.affine[:3, :3])
    reach = np.abs(inv).sum(axis=1) * radius_mm
    lo = np.maximum(np.floor(c_idx - reach).astype(int), 0)
    hi = np.minimum(np.ceil(c_idx + reach).astype(int) + 1, ute.dims)
    if np.any(hi <= lo):
        return RefineResult(center.copy(), 0.0, True)
    box = tuple(slice(a, b) for a, b in zip(lo, hi))
    # x-fastest order inside the box matches global linear index order
    grid = np.stack(np.meshgrid(*[np.arange(a, b) for a, b in zip(lo, hi)], indexing="ij"), axis=-1)
    grid = grid.transpose(2, 1, 0, 3).reshape(-1, 3)
    values = ute.data[box].transpose(2, 1, 0).ravel()
    inside = voi.bits[box].transpose(2, 1, 0).ravel()
    dist = np.linalg.norm(voxel_to_world(ute, grid) - center, axis=1)
    ok = inside & (dist <= radius_mm)
    if not ok.any():
        return RefineResult(center.copy(), 0.0, True)
    sel = np.flatnonzero(ok)
    best = sel[np.argmax(values[sel])]
    return RefineResult(voxel_to_world(ute, grid[best]), float(values[best]), False)


def resample_mask(mask: BinaryMask, target):
    """Nearest-neighbour resampling of ``mask`` onto ``target``'s grid."""
    if mask.same_grid(target):
        return mask
    idx = np.indices(target.dims).reshape(3, -1).T
    world = voxel_to_world(target, idx)
    src = np.floor(world_to_voxel(mask, world) + 0.5).astype(np.int64)
    ok = np.all((src >= 0) & (src < np.array(mask.dims)), axis=1)
    bits = np.zeros(len(idx), dtype=bool)
    bits[ok] = mask.bits[src[ok, 0], src[ok, 1], src[ok, 2]]
    return BinaryMask(bits.reshape(target.dims), target.affine.copy())


@dataclass(eq=False)
class PipelineState:
    """Intermediate products kept for inspection and figures."""

    head: BinaryMask = None
    voi: BinaryMask = None
    candidates: list = None
    icp: object = None
    registered: dict = None


def detect_electrodes(t1, ute, template, cfg: PipelineConfig = None, state: PipelineState = None):
    cfg = cfg or PipelineConfig()
    head = extract_head_mask(t1)
    voi = build_voi_shell(head, cfg.outer_margin_mm, cfg.inner_margin_mm)
    voi = resample_mask(voi, ute)
    candidates = detect_spheres(ute, voi, cfg.hough, workers=cfg.workers)
    centers = _candidate_centers(candidates)
    icp = icp_register(template.unit_pos, centers, max_iter=cfg.icp.max_iter, tol=cfg.icp.tol,
                       with_scale=cfg.icp.with_scale, reject_mm=cfg.icp.reject_mm)
    reg_pts = icp.transform.apply(template.unit_pos)
    registered = dict(zip(template.labels, reg_pts))
    assignment = assign_candidates(registered, candidates, cfg.gate_dist_mm)

    electrodes = []
    for label, theo in registered.items():
        idx, dist = assignment[label]
        if idx is not None:
            cand = candidates[idx]
            electrodes.append(LabeledElectrode(label, cand.center.copy(), "hough", float(cand.score), dist))
        else:
            ref = refine_local_max(ute, voi, theo, cfg.refine_radius_mm)
            electrodes.append(LabeledElectrode(label, np.asarray(ref.position, dtype=np.float64), "local_max",
                                               ref.value, float(np.linalg.norm(ref.position - theo))))
    if state is not None:
        state.head, state.voi, state.candidates, state.icp, state.registered = head, voi, candidates, icp, registered
    return LabeledElectrodeSet(electrodes, icp.transform, cfg, float(icp.residual_history[-1]), len(candidates))


ELECTRODE_FIELDS = ["label", "x_mm", "y_mm", "z_mm", "source", "score", "assign_dist_mm"]


def _num(v):
    return repr(float(v))


def write_electrodes_csv(result: LabeledElectrodeSet, path):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ELECTRODE_FIELDS)
            for e in result.electrodes:
                w.writerow([e.label, *(_num(v) for v in e.position), e.source, _num(e.score), _num(e.assign_dist_mm)])
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}", stage="detect") from exc


def electrodes_json(result: LabeledElectrodeSet):
    return {
        "electrodes": [
            {"label": e.label, "x_mm": float(e.position[0]), "y_mm": float(e.position[1]),
             "z_mm": float(e.position[2]), "source": e.source, "score": float(e.score),
             "assign_dist_mm": float(e.assign_dist_mm)}
            for e in result.electrodes
        ],
        "transform": result.transform.to_json(),
        "icp_residual_mm": result.icp_residual_mm,
        "n_candidates": result.n_candidates,
        "config": result.config.to_json(),
    }


def write_electrodes_json(result: LabeledElectrodeSet, path):
    try:
        Path(path).write_text(json.dumps(electrodes_json(result), indent=2, allow_nan=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}", stage="detect") from exc


def read_electrodes_csv(path) -> dict:
    """Label -> position from a detection CSV (extra columns ignored)."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not {"label", "x_mm", "y_mm", "z_mm"} <= set(reader.fieldnames or []):
            raise ValidationError(f"{path.name}: needs label,x_mm,y_mm,z_mm columns", stage="csv")
        return {r["label"]: np.array([float(r["x_mm"]), float(r["y_mm"]), float(r["z_mm"])]) for r in reader}
