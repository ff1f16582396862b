"""Position errors, detection counts and paired comparison of two methods."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyInput, IoFailure, LabelMismatch, LengthMismatch, MissingFile, ValidationError, ZeroVariance

DEFAULT_THRESHOLD_MM = 10.0


@dataclass
class DetectionReport:
    per_label_pe_mm: dict
    fn_count: int
    fp_count: int
    accuracy_pct: float
    mean_pe_mm: float
    median_pe_mm: float
    max_pe_mm: float
    n_channels: int
    threshold_mm: float

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ValidationError(f"not a detection report: {exc}", stage="evaluation") from exc


def _as_points(obj):
    if hasattr(obj, "positions"):
        return obj.positions()
    return dict(obj)


def position_errors(detected, truth) -> dict:
    """Euclidean distance per label, in the detected set's label order."""
    det = _as_points(detected)
    ref = _as_points(truth)
    if set(det) != set(ref):
        only_det = sorted(set(det) - set(ref))
        only_ref = sorted(set(ref) - set(det))
        raise LabelMismatch(f"label sets differ: only detected {only_det}, only truth {only_ref}")
    return {label: float(np.linalg.norm(np.asarray(det[label], float) - np.asarray(ref[label], float)))
            for label in det}


def detection_stats(pe: dict, threshold_mm=DEFAULT_THRESHOLD_MM) -> DetectionReport:
    """Counts an electrode as missed when its error is at or above the threshold.

    A fixed-size output set misses and misplaces in the same act, so the
    false-positive count always equals the false-negative count.
    """
    if not pe:
        raise EmptyInput("no position errors to summarise")
    if not threshold_mm > 0:
        raise ValidationError("threshold_mm must be > 0", stage="evaluation")
    values = np.array(list(pe.values()), dtype=np.float64)
    n = len(values)
    fn = int(np.count_nonzero(values >= threshold_mm))
    return DetectionReport(
        per_label_pe_mm={k: float(v) for k, v in pe.items()},
        fn_count=fn,
        fp_count=fn,
        accuracy_pct=100.0 * (n - fn) / n,
        mean_pe_mm=float(values.mean()),
        median_pe_mm=float(np.median(values)),
        max_pe_mm=float(values.max()),
        n_channels=n,
        threshold_mm=float(threshold_mm),
    )


def _betacf(a, b, x, max_iter=500, eps=1e-15):
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc_regularized(a, b, x):
    """Regularised incomplete beta ``I_x(a, b)`` for ``a, b > 0``, ``0 <= x <= 1``."""
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t, df):
    """``P(|T| >= |t|)`` for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return min(1.0, betainc_regularized(df / 2.0, 0.5, x))


def paired_t_test(a, b) -> dict:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if len(a) != len(b):
        raise LengthMismatch(f"paired samples differ in length: {len(a)} vs {len(b)}")
    if len(a) < 2:
        raise LengthMismatch("paired t-test needs at least 2 pairs")
    d = a - b
    if np.all(d == d[0]):
        raise ZeroVariance(f"all {len(d)} paired differences equal {d[0]:g}")
    n = len(d)
    sd = d.std(ddof=1)
    t = float(d.mean() / (sd / math.sqrt(n)))
    df = n - 1
    return {"t": t, "df": df, "p_two_sided": t_sf_two_sided(t, df)}


def compare_methods(pe_a: dict, pe_b: dict, name_a="ute", name_b="fiducial", alpha=0.05) -> dict:
    """Paired comparison of two per-label error maps.

    ``delta`` is ``pe_b - pe_a`` per label, so a positive mean delta means
    method ``a`` is closer to the truth.
    """
    if set(pe_a) != set(pe_b):
        raise LabelMismatch(f"label sets differ: {sorted(set(pe_a) ^ set(pe_b))}")
    labels = list(pe_a)
    va = np.array([pe_a[k] for k in labels], dtype=np.float64)
    vb = np.array([pe_b[k] for k in labels], dtype=np.float64)
    delta = vb - va
    try:
        test = paired_t_test(va, vb)
    except ZeroVariance:
        if delta[0] == 0:
            test = {"t": 0.0, "df": len(labels) - 1, "p_two_sided": 1.0}
        else:
            # constant non-zero shift: the difference is certain
            test = {"t": -math.copysign(math.inf, delta[0]), "df": len(labels) - 1, "p_two_sided": 0.0}
    mean_delta = float(delta.mean())
    if mean_delta == 0 or test["p_two_sided"] >= alpha:
        verdict = "no difference"
    elif mean_delta > 0:
        verdict = f"{name_a} better"
    else:
        verdict = f"{name_b} better"
    return {
        "methods": [name_a, name_b],
        "n": len(labels),
        "mean_pe_mm": {name_a: float(va.mean()), name_b: float(vb.mean())},
        "median_pe_mm": {name_a: float(np.median(va)), name_b: float(np.median(vb))},
        "mean_delta_mm": mean_delta,
        "per_label_delta_mm": {k: float(v) for k, v in zip(labels, delta)},
        "t_test": test,
        "alpha": alpha,
        "verdict": verdict,
    }


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_safe(v) for v in obj]
    return obj


def write_json(obj, path):
    try:
        Path(path).write_text(json.dumps(_json_safe(obj), indent=2) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}", stage="report") from exc


def read_report(path) -> DetectionReport:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such report: {path}", stage="report")
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path.name} is not valid JSON: {exc}", stage="report") from exc
    return DetectionReport.from_json(obj)
