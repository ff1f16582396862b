import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eegloc.errors import BadMagic, IoFailure, MissingFile, TruncatedData, UnsupportedDatatype
from eegloc.volume_io import Volume3D, read_nifti, voxel_to_world, world_to_voxel, write_nifti


def _random_volume(rng, tag, dims=None):
    dims = dims or tuple(int(v) for v in rng.integers(1, 9, size=3))
    if tag == "u8":
        data = rng.integers(0, 256, size=dims).astype(np.float32)
    elif tag == "i16":
        data = rng.integers(-32768, 32768, size=dims).astype(np.float32)
    else:
        data = rng.normal(0, 1e3, size=dims).astype(np.float32)
    affine = np.eye(4)
    affine[:3, :3] = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    affine[:3, 3] = rng.normal(0, 50, size=3)
    # the header stores f32, so keep the affine representable
    affine = affine.astype(np.float32).astype(np.float64)
    return Volume3D(data, affine, tag)


@pytest.mark.parametrize("tag", ["u8", "i16", "f32"])
def test_round_trip_each_dtype(tmp_path, tag):
    vol = _random_volume(np.random.default_rng(1), tag, (4, 4, 4))
    write_nifti(vol, tmp_path / "v.nii")
    back = read_nifti(tmp_path / "v.nii")
    assert back.equals(vol)


def test_header_fields(tmp_path):
    vol = Volume3D.from_array(np.zeros((3, 4, 5)), spacing=(2, 3, 4))
    write_nifti(vol, tmp_path / "v.nii")
    raw = (tmp_path / "v.nii").read_bytes()
    assert struct.unpack("<i", raw[:4])[0] == 348
    assert struct.unpack("<f", raw[108:112])[0] == 352.0
    assert struct.unpack("<h", raw[254:256])[0] == 1  # sform_code
    assert raw[344:348] == b"n+1\x00"
    assert len(raw) == 352 + 3 * 4 * 5 * 4


def test_non_axis_aligned_affine_preserved_to_f32(tmp_path):
    c, s = np.cos(0.3), np.sin(0.3)
    affine = np.array([[c, -s, 0, 1.1], [s, c, 0, -2.2], [0, 0, 1.5, 3.3], [0, 0, 0, 1]])
    vol = Volume3D(np.ones((2, 2, 2)), affine)
    write_nifti(vol, tmp_path / "v.nii")
    back = read_nifti(tmp_path / "v.nii")
    np.testing.assert_array_equal(back.affine, affine.astype(np.float32).astype(np.float64))


def test_diagonal_affine_voxel_to_world():
    vol = Volume3D.from_array(np.zeros((2, 2, 2)), spacing=(2, 2, 2), dtype_tag="u8")
    np.testing.assert_allclose(voxel_to_world(vol, (1, 1, 1)), (2, 2, 2))


def test_voxel_to_world_examples():
    vol = Volume3D.from_array(np.zeros((4, 4, 4)))
    np.testing.assert_allclose(voxel_to_world(vol, (1, 2, 3)), (1, 2, 3))
    vol2 = Volume3D.from_array(np.zeros((4, 4, 4)), spacing=(2, 2, 2))
    np.testing.assert_allclose(voxel_to_world(vol2, (1, 2, 3)), (2, 4, 6))


def test_world_voxel_inverse_pair():
    rng = np.random.default_rng(7)
    for _ in range(5):
        vol = _random_volume(rng, "f32", (2, 2, 2))
        p = rng.uniform(-200, 200, size=(1000, 3))
        np.testing.assert_allclose(voxel_to_world(vol, world_to_voxel(vol, p)), p, atol=1e-9, rtol=0)


def test_magic_ni1_rejected(tmp_path):
    vol = Volume3D.from_array(np.zeros((2, 2, 2)))
    write_nifti(vol, tmp_path / "v.nii")
    raw = bytearray((tmp_path / "v.nii").read_bytes())
    raw[344:348] = b"ni1\x00"
    (tmp_path / "bad.nii").write_bytes(bytes(raw))
    with pytest.raises(BadMagic):
        read_nifti(tmp_path / "bad.nii")


@pytest.mark.parametrize("size", [0, 347, 349, 540, -1])
def test_sizeof_hdr_rejected(tmp_path, size):
    vol = Volume3D.from_array(np.zeros((2, 2, 2)))
    write_nifti(vol, tmp_path / "v.nii")
    raw = bytearray((tmp_path / "v.nii").read_bytes())
    raw[:4] = struct.pack("<i", size)
    (tmp_path / "bad.nii").write_bytes(bytes(raw))
    with pytest.raises(BadMagic):
        read_nifti(tmp_path / "bad.nii")


def test_truncated_and_missing(tmp_path):
    vol = Volume3D.from_array(np.zeros((4, 4, 4)))
    write_nifti(vol, tmp_path / "v.nii")
    raw = (tmp_path / "v.nii").read_bytes()
    (tmp_path / "short.nii").write_bytes(raw[:-1])
    with pytest.raises(TruncatedData):
        read_nifti(tmp_path / "short.nii")
    (tmp_path / "stub.nii").write_bytes(raw[:100])
    with pytest.raises(TruncatedData):
        read_nifti(tmp_path / "stub.nii")
    with pytest.raises(MissingFile):
        read_nifti(tmp_path / "nope.nii")


def test_unsupported_datatype(tmp_path):
    vol = Volume3D.from_array(np.zeros((2, 2, 2)))
    write_nifti(vol, tmp_path / "v.nii")
    raw = bytearray((tmp_path / "v.nii").read_bytes())
    raw[70:72] = struct.pack("<h", 64)  # float64
    (tmp_path / "d.nii").write_bytes(bytes(raw))
    with pytest.raises(UnsupportedDatatype):
        read_nifti(tmp_path / "d.nii")


def test_unwritable_path(tmp_path):
    vol = Volume3D.from_array(np.zeros((2, 2, 2)))
    with pytest.raises(IoFailure):
        write_nifti(vol, tmp_path / "missing_dir" / "v.nii")


def test_qform_and_pixdim_fallbacks(tmp_path):
    vol = Volume3D.from_array(np.arange(8, dtype=np.float32).reshape(2, 2, 2), spacing=(2, 3, 4))
    write_nifti(vol, tmp_path / "v.nii")
    raw = bytearray((tmp_path / "v.nii").read_bytes())
    # sform off, qform on: 90 degrees about z, offset (5, 6, 7)
    raw[252:256] = struct.pack("<hh", 1, 0)
    b, c, d = 0.0, 0.0, np.sqrt(0.5)
    raw[256:280] = struct.pack("<6f", b, c, d, 5.0, 6.0, 7.0)
    (tmp_path / "q.nii").write_bytes(bytes(raw))
    q = read_nifti(tmp_path / "q.nii")
    expected = np.array([[0, -3, 0, 5], [2, 0, 0, 6], [0, 0, 4, 7], [0, 0, 0, 1.0]])
    np.testing.assert_allclose(q.affine, expected, atol=1e-6)
    raw[252:256] = struct.pack("<hh", 0, 0)
    (tmp_path / "p.nii").write_bytes(bytes(raw))
    p = read_nifti(tmp_path / "p.nii")
    np.testing.assert_allclose(p.affine, np.diag([2, 3, 4, 1.0]))
    np.testing.assert_array_equal(p.data, vol.data)


def test_scaling_applied(tmp_path):
    vol = Volume3D.from_array(np.full((2, 2, 2), 3.0), dtype_tag="i16")
    write_nifti(vol, tmp_path / "v.nii")
    raw = bytearray((tmp_path / "v.nii").read_bytes())
    raw[112:120] = struct.pack("<ff", 2.0, 1.0)
    (tmp_path / "s.nii").write_bytes(bytes(raw))
    s = read_nifti(tmp_path / "s.nii")
    assert s.dtype_tag == "f32"
    np.testing.assert_array_equal(s.data, 7.0)


def test_disk_order_is_x_fastest(tmp_path):
    data = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    write_nifti(Volume3D.from_array(data), tmp_path / "v.nii")
    payload = np.frombuffer((tmp_path / "v.nii").read_bytes()[352:], dtype="<f4")
    # linear index i + nx*(j + ny*k)
    assert payload[1 + 2 * (2 + 3 * 3)] == data[1, 2, 3]


def test_invariants_rejected():
    with pytest.raises(ValueError):
        Volume3D(np.zeros((2, 2)), np.eye(4))
    singular = np.eye(4)
    singular[2, 2] = 0
    with pytest.raises(ValueError):
        Volume3D(np.zeros((2, 2, 2)), singular)
    with pytest.raises(ValueError):
        Volume3D(np.zeros((2, 2, 2)), np.eye(4), "f64")


def test_spacing_is_column_norm():
    affine = np.eye(4)
    affine[:3, :3] = [[0, 2, 0], [3, 0, 0], [0, 0, 1.5]]
    vol = Volume3D(np.zeros((2, 2, 2)), affine)
    assert vol.spacing == pytest.approx((3.0, 2.0, 1.5), rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), tag=st.sampled_from(["u8", "i16", "f32"]))
def test_round_trip_property(tmp_path_factory, seed, tag):
    vol = _random_volume(np.random.default_rng(seed), tag)
    path = tmp_path_factory.mktemp("rt") / "v.nii"
    write_nifti(vol, path)
    assert read_nifti(path).equals(vol)
