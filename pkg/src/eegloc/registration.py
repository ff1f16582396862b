"""Cap template, closed-form similarity fitting and ICP.

The template lives on the unit sphere; registration maps it into subject
space with a similarity transform ``p -> s * R @ p + t``.
"""
from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateConfiguration,
    DuplicateLabel,
    IoFailure,
    MissingFile,
    MissingFiducial,
    NonUnitVector,
    TooFewCandidates,
    TooFewPoints,
)

FIDUCIAL_NAMES = ("nasion", "inion", "lpa", "rpa", "vertex")
DEFAULT_TEMPLATE = "template_65.csv"


@dataclass(eq=False)
class ElectrodeTemplate:
    labels: list
    unit_pos: np.ndarray
    fiducials: dict = field(default_factory=dict)

    def __post_init__(self):
        self.unit_pos = np.asarray(self.unit_pos, dtype=np.float64).reshape(-1, 3)

    @property
    def n_channels(self):
        return len(self.labels)

    def fiducial_array(self, names=FIDUCIAL_NAMES):
        return np.array([self.fiducials[n] for n in names])


def _parse_template(rows, source):
    labels, pos, fids = [], [], {}
    seen = set()
    for n, row in enumerate(rows, start=2):
        label = (row.get("label") or "").strip()
        if label in seen:
            raise DuplicateLabel(f"{source}:{n}: label {label!r} appears twice")
        seen.add(label)
        vec = np.array([float(row["ux"]), float(row["uy"]), float(row["uz"])])
        norm = np.linalg.norm(vec)
        if abs(norm - 1.0) > 0.05:
            raise NonUnitVector(f"{source}:{n}: {label} has |u| = {norm:.4g}, not unit length")
        vec = vec / norm
        kind = (row.get("is_fiducial") or "").strip().lower()
        if kind:
            if kind not in FIDUCIAL_NAMES:
                raise MissingFiducial(f"{source}:{n}: unknown fiducial kind {kind!r}")
            if kind in fids:
                raise DuplicateLabel(f"{source}:{n}: fiducial {kind!r} declared twice")
            fids[kind] = vec
        else:
            labels.append(label)
            pos.append(vec)
    missing = [f for f in FIDUCIAL_NAMES if f not in fids]
    if missing:
        raise MissingFiducial(f"{source}: missing fiducials {', '.join(missing)}")
    return ElectrodeTemplate(labels, np.array(pos), fids)


def load_template(path=None) -> ElectrodeTemplate:
    """Read a template CSV (``label,ux,uy,uz,is_fiducial``).

    Rows with a non-empty ``is_fiducial`` declare landmarks, all other rows
    are channels. Without ``path`` the bundled 65-channel layout is loaded.
    """
    if path is None:
        text = resources.files("eegloc").joinpath("data", DEFAULT_TEMPLATE).read_text()
        return _parse_template(csv.DictReader(text.splitlines()), DEFAULT_TEMPLATE)
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such template file: {path}", stage="template")
    with open(path, newline="") as fh:
        return _parse_template(csv.DictReader(fh), path.name)


@dataclass(eq=False)
class SimilarityTransform:
    R: np.ndarray
    t: np.ndarray
    s: float = 1.0

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        self.s = float(self.s)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3), 1.0)

    def apply(self, pts):
        pts = np.asarray(pts, dtype=np.float64)
        return self.s * pts @ self.R.T + self.t

    def inverse(self):
        Rt = self.R.T
        return SimilarityTransform(Rt, -(Rt @ self.t) / self.s, 1.0 / self.s)

    def compose(self, other):
        """``self`` after ``other``: ``p -> self(other(p))``."""
        return SimilarityTransform(self.R @ other.R, self.s * self.R @ other.t + self.t, self.s * other.s)

    def to_json(self):
        return {"R": [float(v) for v in self.R.ravel()], "t": [float(v) for v in self.t], "s": self.s}

    @classmethod
    def from_json(cls, obj):
        return cls(np.array(obj["R"], dtype=np.float64).reshape(3, 3), obj["t"], obj["s"])


def apply_transform(transform, pts):
    return transform.apply(pts)


def umeyama(src, dst, with_scale=True) -> SimilarityTransform:
    """Least-squares similarity (or rigid) transform taking ``src`` onto ``dst``."""
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    if len(src) != len(dst) or len(src) < 3:
        raise TooFewPoints(f"need two equal-size sets of >= 3 points, got {len(src)} and {len(dst)}")
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    xs, xd = src - mu_s, dst - mu_d
    cov = xd.T @ xs / len(src)
    U, D, Vt = np.linalg.svd(cov)
    if D[0] <= 1e-12 or D[1] <= 1e-10 * D[0]:
        raise DegenerateConfiguration(f"cross-covariance rank < 2 (singular values {D})")
    S = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2] = -1.0
    R = (U * S) @ Vt
    if with_scale:
        var_s = (xs ** 2).sum() / len(src)
        s = float((D * S).sum() / var_s)
    else:
        s = 1.0
    return SimilarityTransform(R, mu_d - s * R @ mu_s, s)


@dataclass(eq=False)
class IcpResult:
    transform: SimilarityTransform
    residual_history: list
    iterations: int
    converged: bool
    seed: int = 0
    matches: np.ndarray = None


def nearest(points, targets):
    """Index of and distance to the nearest target for each point (first index on ties)."""
    d2 = ((points[:, None, :] - targets[None, :, :]) ** 2).sum(axis=-1)
    idx = np.argmin(d2, axis=1)
    return idx, np.sqrt(d2[np.arange(len(points)), idx])


def _signed_permutations():
    mats = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1.0, -1.0), repeat=3):
            m = np.zeros((3, 3))
            m[list(range(3)), list(perm)] = signs
            mats.append(m)
    return mats


_SIGNED_PERMS = _signed_permutations()


def _principal_frame(pts):
    """Principal axes as columns (largest variance first) and their variances."""
    centred = pts - pts.mean(axis=0)
    vals, vecs = np.linalg.eigh(centred.T @ centred / len(pts))
    return vecs[:, ::-1], vals[::-1]


def _symmetry_axis(variances, tol):
    """Index of the one distinct principal axis when the other two have near-equal variance."""
    v = variances
    if v[0] - v[1] <= tol * v[0]:
        return 2
    if v[1] - v[2] <= tol * v[1]:
        return 0
    return None


def _axis_rotation(axis, angle):
    k = np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def seed_rotations(src, dst, twist_step_deg=15.0, symmetry_tol=0.1):
    """Initial rotations mapping the principal axes of ``src`` onto those of ``dst``.

    These are the 24 proper rotations of the cube expressed between the two
    principal frames; the set does not depend on eigenvector sign choices.
    When either cloud is close to axisymmetric (two variances within
    ``symmetry_tol``) PCA pins down only the symmetry axis, so the seeds that
    keep that axis are instead swept around it in ``twist_step_deg`` steps.
    """
    fs, ws = _principal_frame(src)
    fd, wd = _principal_frame(dst)
    seeds = []
    for c in _SIGNED_PERMS:
        r = fd @ c @ fs.T
        if np.linalg.det(r) > 0:
            seeds.append((c, r))
    axis = _symmetry_axis(ws, symmetry_tol)
    if axis is None:
        axis = _symmetry_axis(wd, symmetry_tol)
    if axis is None:
        return [r for _, r in seeds]
    n_twist = max(1, int(round(90.0 / twist_step_deg)))
    twists = [_axis_rotation(fd[:, axis], np.deg2rad(k * 90.0 / n_twist)) for k in range(n_twist)]
    return [tw @ r for c, r in seeds if c[axis, axis] != 0 for tw in twists]


def _rms(dist, reject):
    if reject is not None:
        dist = np.minimum(dist, reject)
    return float(np.sqrt(np.mean(dist ** 2)))


def _icp_from(src, dst, start, max_iter, tol, with_scale, reject=None):
    """Alternate nearest-neighbour matching and closed-form fitting from ``start``.

    With ``reject`` set, pairs farther apart than ``reject`` mm are left out
    of the fit and count as ``reject`` in the residual, which keeps the
    residual non-increasing.
    """
    transform = start
    idx, dist = nearest(transform.apply(src), dst)
    history = [_rms(dist, reject)]
    converged = history[0] == 0.0
    iterations = 0
    while not converged and iterations < max_iter:
        use = dist <= reject if reject is not None else np.ones(len(src), dtype=bool)
        try:
            proposal = umeyama(src[use], dst[idx[use]], with_scale)
        except (DegenerateConfiguration, TooFewPoints):
            break
        iterations += 1
        new_idx, new_dist = nearest(proposal.apply(src), dst)
        res = _rms(new_dist, reject)
        prev = history[-1]
        if res > prev:
            # only possible through round-off at the optimum
            converged = True
            break
        transform, idx, dist = proposal, new_idx, new_dist
        history.append(res)
        if prev - res <= tol * prev:
            converged = True
    return transform, history, iterations, converged, idx


def icp_register(template_pts, candidates, max_iter=100, tol=1e-6, with_scale=True, init=None,
                 reject_mm=None) -> IcpResult:
    """Register template points onto a candidate cloud.

    Correspondences run template -> nearest candidate. The residual is the
    RMS nearest-candidate distance, recorded once per evaluated transform.
    Without ``init`` the cloud centroids are aligned, the scale is set from
    RMS radii and every rotation from :func:`seed_rotations` is refined;
    the seed with the lowest final residual wins (lowest index on ties).

    ``reject_mm`` adds a final stage, started from the winning transform,
    that ignores pairs farther apart than ``reject_mm``. Template points with
    no true counterpart then stop pulling the fit. Off by default.
    """
    src = np.asarray(template_pts, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(candidates, dtype=np.float64).reshape(-1, 3)
    if len(dst) < 4:
        raise TooFewCandidates(f"ICP needs >= 4 candidates, got {len(dst)}")
    if len(src) < 3:
        raise TooFewPoints(f"template needs >= 3 points, got {len(src)}")
    if reject_mm is not None and not reject_mm > 0:
        raise ValueError("reject_mm must be > 0")

    if init is not None:
        starts = [init]
    else:
        mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
        rms_s = np.sqrt(((src - mu_s) ** 2).sum(axis=1).mean())
        rms_d = np.sqrt(((dst - mu_d) ** 2).sum(axis=1).mean())
        s0 = rms_d / rms_s if with_scale else 1.0
        starts = [SimilarityTransform(r, mu_d - s0 * r @ mu_s, s0) for r in seed_rotations(src, dst)]

    best = None
    for n, start in enumerate(starts):
        transform, history, iterations, converged, idx = _icp_from(src, dst, start, max_iter, tol, with_scale)
        if best is None or history[-1] < best.residual_history[-1]:
            best = IcpResult(transform, history, iterations, converged, n, idx)

    if reject_mm is not None:
        transform, history, iterations, converged, idx = _icp_from(
            src, dst, best.transform, max_iter, tol, with_scale, float(reject_mm))
        # the truncated residual never exceeds the plain one, so the joined history stays monotone
        best = IcpResult(transform, best.residual_history + history[1:], best.iterations + iterations,
                         converged, best.seed, idx)
    return best


def fiducial_register(template: ElectrodeTemplate, fiducials_mm) -> SimilarityTransform:
    """Similarity fit of the template's five landmarks onto measured ones."""
    missing = [n for n in FIDUCIAL_NAMES if n not in fiducials_mm]
    if missing:
        raise MissingFiducial(f"fiducials missing: {', '.join(missing)}", stage="fiducial_register")
    dst = np.array([fiducials_mm[n] for n in FIDUCIAL_NAMES], dtype=np.float64)
    return umeyama(template.fiducial_array(), dst, with_scale=True)


def write_transform_json(transform, path):
    try:
        Path(path).write_text(json.dumps(transform.to_json(), indent=2) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}", stage="registration") from exc
