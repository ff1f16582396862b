"""Regenerate src/eegloc/data/template_65.csv.

Idealised 10-10 layout on the unit sphere (x right, y anterior, z up):
midline sites every 22.5 deg of polar angle from Fpz (front equator) over Cz
to Oz, the equatorial ring every 18 deg, and each coronal row interpolated
along the great circle from its midline site to its equatorial site. The
channel set is the 64-channel cap layout plus the FCz reference.
"""
import csv
from pathlib import Path

import numpy as np

MIDLINE = {"Fp": 90, "AF": 67.5, "F": 45, "FC": 22.5, "C": 0, "CP": -22.5, "P": -45, "PO": -67.5, "O": -90}
EQUATOR = {"Fp": 18, "AF": 36, "F": 54, "FC": 72, "C": 90, "CP": 108, "P": 126, "PO": 144, "O": 162}
EDGE = {"F": "F", "FC": "FT", "C": "T", "CP": "TP", "P": "P"}

ORDER = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "FC5", "FC1", "FC2", "FC6", "T7", "C3", "Cz", "C4", "T8",
    "TP9", "CP5", "CP1", "CP2", "CP6", "TP10", "P7", "P3", "Pz", "P4", "P8", "PO9", "O1", "Oz", "O2", "PO10",
    "AF7", "AF3", "AF4", "AF8", "F5", "F1", "F2", "F6", "FT9", "FT7", "FC3", "FC4", "FT8", "FT10", "C5", "C1",
    "C2", "C6", "TP7", "CP3", "CPz", "CP4", "TP8", "P5", "P1", "P2", "P6", "PO7", "PO3", "POz", "PO4", "PO8",
    "FCz",
]


def direction(theta, phi):
    t, p = np.radians(theta), np.radians(phi)
    return np.array([np.sin(t) * np.sin(p), np.sin(t) * np.cos(p), np.cos(t)])


def slerp(a, b, f):
    w = np.arccos(np.clip(a @ b, -1.0, 1.0))
    return (np.sin((1 - f) * w) * a + np.sin(f * w) * b) / np.sin(w)


def layout():
    pos = {}
    for row, angle in MIDLINE.items():
        pos[row + "z"] = direction(abs(angle), 0 if angle >= 0 else 180)
    for sign, nums in ((-1, (1, 3, 5)), (1, (2, 4, 6))):
        for row in MIDLINE:
            mid = pos[row + "z"]
            eq = direction(90, sign * EQUATOR[row])
            if row in EDGE:
                for step, n in enumerate(nums):
                    pos[f"{row}{n}"] = slerp(mid, eq, (step + 1) / 4)
                pos[f"{EDGE[row]}{nums[0] + 6}"] = eq
            elif row in ("AF", "PO"):
                pos[f"{row}{nums[1]}"] = slerp(mid, eq, 0.5)
                pos[f"{row}{nums[0] + 6}"] = eq
            else:
                pos[f"{row}{nums[0]}"] = eq
        tail = "9" if sign < 0 else "10"
        for name, phi in (("FT", 72), ("TP", 108), ("PO", 144)):
            pos[name + tail] = direction(112.5, sign * phi)
    return pos


def main():
    pos = layout()
    fiducials = {
        "NAS": ("nasion", direction(112.5, 0)),
        "INI": ("inion", direction(112.5, 180)),
        "LPA": ("lpa", direction(112.5, -90)),
        "RPA": ("rpa", direction(112.5, 90)),
        "VTX": ("vertex", direction(0, 0)),
    }
    out = Path(__file__).resolve().parents[1] / "src" / "eegloc" / "data" / "template_65.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "ux", "uy", "uz", "is_fiducial"])
        for label in ORDER:
            w.writerow([label, *(f"{v:.9f}" for v in pos[label] + 0.0), ""])
        for label, (kind, vec) in fiducials.items():
            w.writerow([label, *(f"{v:.9f}" for v in vec + 0.0), kind])
    print(f"wrote {len(ORDER)} channels + {len(fiducials)} fiducials to {out}")


if __name__ == "__main__":
    main()
