"""Flattened scalp view: azimuthal-equidistant projection about the vertex.

Axis convention: with the default vertex axis +z, ``u`` grows toward +x
(subject right) and ``v`` toward +y (anterior). For another vertex axis the
in-plane reference is +x projected onto the plane, or +y if +x is parallel
to the axis. ``(u, v)`` are in radians of polar angle, so the equator of
the head sphere sits at radius pi/2.
"""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePoint, IoFailure

# 3x5 glyphs, one string of 15 bits per character, rows top to bottom
_GLYPHS = {
    "0": "111101101101111", "1": "010110010010111", "2": "111001111100111", "3": "111001111001111",
    "4": "101101111001001", "5": "111100111001111", "6": "111100111101111", "7": "111001001001001",
    "8": "111101111101111", "9": "111101111001111",
    "A": "010101111101101", "B": "110101110101110", "C": "011100100100011", "D": "110101101101110",
    "E": "111100110100111", "F": "111100110100100", "G": "011100101101011", "H": "101101111101101",
    "I": "111010010010111", "J": "001001001101010", "K": "101101110101101", "L": "100100100100111",
    "M": "101111111101101", "N": "110101101101101", "O": "010101101101010", "P": "110101110100100",
    "Q": "010101101110011", "R": "110101110101101", "S": "011100010001110", "T": "111010010010010",
    "U": "101101101101111", "V": "101101101101010", "W": "101101111111101", "X": "101101010101101",
    "Y": "101101010010010", "Z": "111001010100111", "-": "000000111000000", "_": "000000000000111",
}


@dataclass(eq=False)
class PancakeProjection:
    coords: dict
    center: np.ndarray
    vertex_axis: np.ndarray


def _plane_basis(axis):
    ref = np.array([1.0, 0.0, 0.0])
    if abs(axis @ ref) > 1 - 1e-9:
        ref = np.array([0.0, 1.0, 0.0])
    e1 = ref - (ref @ axis) * axis
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return e1, e2


def project(points: dict, head_center, vertex_axis=(0.0, 0.0, 1.0)) -> PancakeProjection:
    center = np.asarray(head_center, dtype=np.float64)
    axis = np.asarray(vertex_axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    e1, e2 = _plane_basis(axis)
    coords = {}
    for label, p in points.items():
        rel = np.asarray(p, dtype=np.float64) - center
        norm = np.linalg.norm(rel)
        if norm <= 1e-9:
            raise DegeneratePoint(f"{label} coincides with the projection centre")
        d = rel / norm
        theta = float(np.arccos(np.clip(d @ axis, -1.0, 1.0)))
        phi = float(np.arctan2(d @ e2, d @ e1))
        coords[label] = (theta * np.cos(phi), theta * np.sin(phi))
    return PancakeProjection(coords, center, axis)


def _draw_disc(img, row, col, radius, value):
    h, w = img.shape
    r0, r1 = max(int(row - radius), 0), min(int(row + radius) + 1, h)
    c0, c1 = max(int(col - radius), 0), min(int(col + radius) + 1, w)
    if r0 >= r1 or c0 >= c1:
        return
    rr, cc = np.mgrid[r0:r1, c0:c1]
    img[r0:r1, c0:c1][(rr - row) ** 2 + (cc - col) ** 2 <= radius * radius] = value


def _draw_text(img, row, col, text, value, scale=2):
    h, w = img.shape
    for n, ch in enumerate(text.upper()):
        bits = _GLYPHS.get(ch)
        if bits is None:
            continue
        for k, bit in enumerate(bits):
            if bit != "1":
                continue
            r = row + (k // 3) * scale
            c = col + n * 4 * scale + (k % 3) * scale
            if 0 <= r and r + scale <= h and 0 <= c and c + scale <= w:
                img[r:r + scale, c:c + scale] = value


def rasterize(proj: PancakeProjection, size=512):
    """Greyscale image: equator circle, one disc per electrode, text labels."""
    img = np.zeros((size, size), dtype=np.uint8)
    thetas = [np.hypot(*uv) for uv in proj.coords.values()]
    reach = max([np.pi / 2] + thetas) * 1.08
    scale = 0.45 * size / reach
    mid = (size - 1) / 2.0

    ang = np.linspace(0, 2 * np.pi, 4 * size, endpoint=False)
    rows = np.round(mid - np.pi / 2 * scale * np.sin(ang)).astype(int)
    cols = np.round(mid + np.pi / 2 * scale * np.cos(ang)).astype(int)
    ok = (rows >= 0) & (rows < size) & (cols >= 0) & (cols < size)
    img[rows[ok], cols[ok]] = 90

    for label, (u, v) in proj.coords.items():
        row, col = mid - v * scale, mid + u * scale
        _draw_disc(img, row, col, 4, 255)
        _draw_text(img, int(round(row)) - 5, int(round(col)) + 6, label, 200)
    return img


def write_pgm(img, path):
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(img.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}", stage="pancake") from exc


def read_pgm(path):
    raw = open(path, "rb").read()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if m is None:
        raise ValueError(f"{path} is not a binary PGM")
    w, h = int(m.group(1)), int(m.group(2))
    return np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=m.end()).reshape(h, w)


def write_coords_csv(proj: PancakeProjection, path):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", "u", "v"])
            for label, (u, v) in proj.coords.items():
                w.writerow([label, repr(float(u)), repr(float(v))])
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}", stage="pancake") from exc


def render_pancake(points: dict, head_center, vertex_axis=(0.0, 0.0, 1.0), image_path=None, coords_path=None,
                   size=512):
    """Project, then write the PGM raster and the coordinate CSV when paths are given."""
    proj = project(points, head_center, vertex_axis)
    img = rasterize(proj, size)
    if image_path is not None:
        write_pgm(img, image_path)
    if coords_path is not None:
        write_coords_csv(proj, coords_path)
    return proj, img
