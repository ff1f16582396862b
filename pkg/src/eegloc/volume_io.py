"""NIfTI-1 single-file volumes and voxel/world geometry.

Only uncompressed ``.nii`` files are handled: 348-byte little-endian header,
magic ``n+1\\0``, 3D data of type uint8, int16 or float32. Data are held
in memory as float32 arrays of shape ``(nx, ny, nz)``; on disk they are
stored x-fastest as the format requires.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic, IoFailure, MissingFile, TruncatedData, UnsupportedDatatype

HEADER_SIZE = 348
VOX_OFFSET = 352

# nifti datatype code -> (tag, numpy little-endian dtype, bitpix)
DATATYPES = {
    2: ("u8", np.dtype("<u1"), 8),
    4: ("i16", np.dtype("<i2"), 16),
    16: ("f32", np.dtype("<f4"), 32),
}
TAG_TO_CODE = {tag: code for code, (tag, _, _) in DATATYPES.items()}

# Field layout of the NIfTI-1 header, little endian.
_HEADER_FMT = (
    "<i"      # sizeof_hdr
    "10s18s"  # data_type, db_name
    "i"       # extents
    "h"       # session_error
    "c"       # regular
    "B"       # dim_info
    "8h"      # dim
    "3f"      # intent_p1..3
    "h"       # intent_code
    "h"       # datatype
    "h"       # bitpix
    "h"       # slice_start
    "8f"      # pixdim
    "f"       # vox_offset
    "f"       # scl_slope
    "f"       # scl_inter
    "h"       # slice_end
    "B"       # slice_code
    "B"       # xyzt_units
    "f"       # cal_max
    "f"       # cal_min
    "f"       # slice_duration
    "f"       # toffset
    "i"       # glmax
    "i"       # glmin
    "80s"     # descrip
    "24s"     # aux_file
    "h"       # qform_code
    "h"       # sform_code
    "3f"      # quatern_b, c, d
    "3f"      # qoffset_x, y, z
    "4f4f4f"  # srow_x, srow_y, srow_z
    "16s"     # intent_name
    "4s"      # magic
)
assert struct.calcsize(_HEADER_FMT) == HEADER_SIZE


@dataclass(eq=False)
class Volume3D:
    """Scalar voxel grid with a voxel-index to world-mm affine.

    Parameters
    ----------
    data : ndarray
        float32 array of shape ``(nx, ny, nz)``.
    affine : ndarray
        4x4 homogeneous matrix mapping ``(i, j, k, 1)`` to world mm.
    dtype_tag : str
        On-disk type, one of ``"u8"``, ``"i16"``, ``"f32"``.
    """

    data: np.ndarray
    affine: np.ndarray
    dtype_tag: str = "f32"

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        self.affine = np.asarray(self.affine, dtype=np.float64)
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise ValueError(f"volume data must be 3D and non-empty, got shape {self.data.shape}")
        if self.affine.shape != (4, 4):
            raise ValueError("affine must be 4x4")
        if not np.allclose(self.affine[3], [0, 0, 0, 1]):
            raise ValueError("affine last row must be (0, 0, 0, 1)")
        if abs(np.linalg.det(self.affine[:3, :3])) <= 1e-12:
            raise ValueError("affine 3x3 block is singular")
        if self.dtype_tag not in TAG_TO_CODE:
            raise ValueError(f"unknown dtype tag {self.dtype_tag!r}")

    @classmethod
    def from_array(cls, data, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0), dtype_tag="f32"):
        """Build a volume with an axis-aligned affine."""
        affine = np.diag([*map(float, spacing), 1.0])
        affine[:3, 3] = origin
        return cls(data, affine, dtype_tag)

    @property
    def dims(self):
        return tuple(int(n) for n in self.data.shape)

    @property
    def spacing(self):
        return tuple(float(v) for v in np.linalg.norm(self.affine[:3, :3], axis=0))

    def same_grid(self, other) -> bool:
        return self.dims == tuple(other.dims) and np.allclose(self.affine, other.affine, atol=1e-6)

    def equals(self, other) -> bool:
        """Bit-exact equality of geometry, data and dtype tag."""
        return (
            self.dtype_tag == other.dtype_tag
            and np.array_equal(self.affine, other.affine)
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
        )


def voxel_to_world(vol, index):
    """Map voxel indices (``(3,)`` or ``(n, 3)``) to world mm."""
    index = np.asarray(index, dtype=np.float64)
    return index @ vol.affine[:3, :3].T + vol.affine[:3, 3]


def world_to_voxel(vol, point):
    """Inverse of :func:`voxel_to_world`; returns real-valued indices."""
    point = np.asarray(point, dtype=np.float64)
    return np.linalg.solve(vol.affine[:3, :3], (point - vol.affine[:3, 3]).T).T


def _quaternion_affine(b, c, d, qoffset, pixdim):
    a = np.sqrt(max(0.0, 1.0 - (b * b + c * c + d * d)))
    rot = np.array([
        [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
        [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
        [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b],
    ])
    qfac = -1.0 if pixdim[0] < 0 else 1.0
    zooms = np.array([pixdim[1], pixdim[2], qfac * pixdim[3]], dtype=np.float64)
    affine = np.eye(4)
    affine[:3, :3] = rot * zooms
    affine[:3, 3] = qoffset
    return affine


def read_nifti(path) -> Volume3D:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such file: {path}", stage="read_nifti")
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}", stage="read_nifti") from exc
    if len(raw) < HEADER_SIZE:
        raise TruncatedData(f"{path}: {len(raw)} bytes, shorter than a NIfTI-1 header", stage="read_nifti")

    fields = struct.unpack(_HEADER_FMT, raw[:HEADER_SIZE])
    sizeof_hdr = fields[0]
    magic = fields[-1]
    if sizeof_hdr != HEADER_SIZE:
        raise BadMagic(f"{path}: sizeof_hdr is {sizeof_hdr}, expected 348 (little-endian NIfTI-1)",
                       stage="read_nifti")
    if magic != b"n+1\x00":
        raise BadMagic(f"{path}: magic {magic!r} is not single-file NIfTI-1 'n+1\\0'", stage="read_nifti")

    dim = fields[7:15]
    datatype = fields[19]
    pixdim = fields[22:30]
    vox_offset, scl_slope, scl_inter = fields[30:33]
    qform_code, sform_code = fields[44:46]
    quat = fields[46:49]
    qoffset = fields[49:52]
    srows = np.array(fields[52:64], dtype=np.float64).reshape(3, 4)

    if dim[0] != 3:
        raise UnsupportedDatatype(f"{path}: only 3D volumes are supported (dim[0]={dim[0]})", stage="read_nifti")
    if datatype not in DATATYPES:
        raise UnsupportedDatatype(f"{path}: datatype code {datatype} not in (2, 4, 16)", stage="read_nifti")
    nx, ny, nz = dim[1:4]
    if min(nx, ny, nz) < 1:
        raise UnsupportedDatatype(f"{path}: non-positive dimensions {dim[1:4]}", stage="read_nifti")

    tag, dtype, _ = DATATYPES[datatype]
    start = int(vox_offset)
    nbytes = nx * ny * nz * dtype.itemsize
    if len(raw) < start + nbytes:
        raise TruncatedData(f"{path}: expected {nbytes} data bytes at offset {start}, file has {len(raw) - start}",
                            stage="read_nifti")
    data = np.frombuffer(raw, dtype=dtype, count=nx * ny * nz, offset=start)
    data = data.reshape((nx, ny, nz), order="F").astype(np.float32)
    if scl_slope != 0 and not (scl_slope == 1 and scl_inter == 0):
        data = (data * np.float32(scl_slope) + np.float32(scl_inter)).astype(np.float32)
        tag = "f32"

    if sform_code > 0:
        affine = np.eye(4)
        affine[:3] = srows
    elif qform_code > 0:
        affine = _quaternion_affine(*quat, qoffset, pixdim)
    else:
        affine = np.diag([pixdim[1], pixdim[2], pixdim[3], 1.0])
    return Volume3D(data, affine, tag)


def write_nifti(vol: Volume3D, path) -> None:
    path = Path(path)
    code = TAG_TO_CODE[vol.dtype_tag]
    _, dtype, bitpix = DATATYPES[code]
    nx, ny, nz = vol.dims
    sx, sy, sz = vol.spacing
    if vol.dtype_tag == "f32":
        payload = vol.data.astype(dtype)
    else:
        info = np.iinfo(dtype)
        payload = np.clip(np.rint(vol.data), info.min, info.max).astype(dtype)
    srows = vol.affine[:3].astype(np.float32).ravel()
    header = struct.pack(
        _HEADER_FMT,
        HEADER_SIZE, b"", b"", 0, 0, b"r", 0,
        3, nx, ny, nz, 1, 1, 1, 1,
        0.0, 0.0, 0.0, 0, code, bitpix, 0,
        1.0, sx, sy, sz, 0.0, 0.0, 0.0, 0.0,
        float(VOX_OFFSET), 0.0, 0.0,
        0, 0, 2,  # slice_end, slice_code, xyzt_units = mm
        0.0, 0.0, 0.0, 0.0, 0, 0,
        b"eegloc", b"",
        0, 1,  # qform_code, sform_code
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        *srows.tolist(),
        b"", b"n+1\x00",
    )
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(b"\x00" * (VOX_OFFSET - HEADER_SIZE))
            fh.write(payload.tobytes(order="F"))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}", stage="write_nifti") from exc
