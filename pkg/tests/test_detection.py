import json

import numpy as np
import pytest

from eegloc.detection import (
    IcpOptions,
    PipelineConfig,
    assign_candidates,
    detect_electrodes,
    electrodes_json,
    read_electrodes_csv,
    refine_local_max,
    resample_mask,
    write_electrodes_csv,
)
from eegloc.errors import EmptyVoi, TooFewCandidates, ValidationError
from eegloc.evaluation import detection_stats, position_errors
from eegloc.hough import HoughParams, SphereCandidate
from eegloc.morphology import BinaryMask
from eegloc.phantom import PhantomSpec, generate_phantom
from eegloc.volume_io import Volume3D


def _cand(p, score=10):
    return SphereCandidate(np.asarray(p, dtype=float), 6.0, score)


def test_assign_exact():
    reg = {"A": np.array([0.0, 0, 0]), "B": np.array([30.0, 0, 0]), "C": np.array([0.0, 30, 0])}
    cands = [_cand(reg["C"]), _cand(reg["A"]), _cand(reg["B"])]
    out = assign_candidates(reg, cands, 15.0)
    assert out == {"A": (1, 0.0), "B": (2, 0.0), "C": (0, 0.0)}


def test_assign_tie_rules():
    reg = {"A": np.array([0.0, 0, 0]), "B": np.array([10.0, 0, 0])}
    # strictly closer label wins
    out = assign_candidates(reg, [_cand([6.0, 0, 0])], 15.0)
    assert out["B"] == (0, 4.0) and out["A"] == (None, None)
    # exact tie goes to the earlier label
    out = assign_candidates(reg, [_cand([5.0, 0, 0])], 15.0)
    assert out["A"] == (0, 5.0) and out["B"] == (None, None)
    reg_rev = {"B": reg["B"], "A": reg["A"]}
    out = assign_candidates(reg_rev, [_cand([5.0, 0, 0])], 15.0)
    assert out["B"] == (0, 5.0) and out["A"] == (None, None)
    # equal distances for one label: lower candidate index
    out = assign_candidates({"A": np.zeros(3)}, [_cand([0, 3.0, 0]), _cand([3.0, 0, 0])], 15.0)
    assert out["A"] == (0, 3.0)


def test_assign_gate_and_empty():
    reg = {"A": np.zeros(3), "B": np.array([50.0, 0, 0])}
    assert assign_candidates(reg, [], 15.0) == {"A": (None, None), "B": (None, None)}
    out = assign_candidates(reg, [_cand([15.0, 0, 0]), _cand([50.0, 15.5, 0])], 15.0)
    assert out["A"] == (0, 15.0) and out["B"] == (None, None)


def test_assign_injective_random():
    rng = np.random.default_rng(0)
    for _ in range(20):
        reg = {f"L{n}": p for n, p in enumerate(rng.uniform(0, 100, (30, 3)))}
        cands = [_cand(p) for p in rng.uniform(0, 100, (25, 3))]
        out = assign_candidates(reg, cands, 20.0)
        used = [idx for idx, _ in out.values() if idx is not None]
        assert len(used) == len(set(used))
        assert all(d <= 20.0 for _, d in out.values() if d is not None)


def _grid(dims=(30, 30, 30)):
    return Volume3D.from_array(np.zeros(dims, dtype=np.float32))


def test_refine_bright_voxel():
    ute = _grid()
    ute.data[19, 15, 15] = 1000.0
    voi = BinaryMask(np.ones(ute.dims, dtype=bool), ute.affine)
    res = refine_local_max(ute, voi, np.array([15.0, 15, 15]), 10.0)
    np.testing.assert_array_equal(res.position, [19, 15, 15])
    assert res.value == 1000.0 and not res.fallback


def test_refine_uniform_takes_lowest_linear_index():
    ute = _grid()
    ute.data[...] = 5.0
    voi = BinaryMask(np.ones(ute.dims, dtype=bool), ute.affine)
    res = refine_local_max(ute, voi, np.array([15.0, 15, 15]), 3.0)
    # lowest i + nx*(j + ny*k) inside the ball is the voxel at k = 12
    np.testing.assert_array_equal(res.position, [15, 15, 12])


def test_refine_respects_voi_and_falls_back():
    ute = _grid()
    ute.data[15, 15, 15] = 1000.0
    ute.data[15, 18, 15] = 500.0
    bits = np.zeros(ute.dims, dtype=bool)
    bits[:, 17:, :] = True
    res = refine_local_max(ute, BinaryMask(bits, ute.affine), np.array([15.0, 15, 15]), 5.0)
    np.testing.assert_array_equal(res.position, [15, 18, 15])
    empty = BinaryMask(np.zeros(ute.dims, dtype=bool), ute.affine)
    center = np.array([15.0, 15, 15])
    res = refine_local_max(ute, empty, center, 5.0)
    assert res.fallback and np.array_equal(res.position, center)
    far = np.array([500.0, 500, 500])
    assert refine_local_max(ute, BinaryMask(bits, ute.affine), far, 5.0).fallback


def test_resample_mask_between_grids():
    fine = Volume3D.from_array(np.zeros((20, 20, 20)), spacing=(1, 1, 1))
    coarse_bits = np.zeros((10, 10, 10), dtype=bool)
    coarse_bits[2:6, 2:6, 2:6] = True
    coarse = BinaryMask(coarse_bits, np.diag([2.0, 2.0, 2.0, 1.0]))
    out = resample_mask(coarse, fine)
    assert out.dims == (20, 20, 20)
    # world 4..10 mm set in the coarse grid; nearest neighbour rounds half up
    assert out.bits[4, 4, 4] and out.bits[10, 10, 10] and not out.bits[12, 12, 12] and not out.bits[2, 2, 2]
    assert resample_mask(out, fine) is out


def test_config_json_round_trip_and_errors():
    cfg = PipelineConfig(gate_dist_mm=12.0, hough=HoughParams(r_min_mm=4), icp=IcpOptions(max_iter=30))
    back = PipelineConfig.from_json(json.loads(json.dumps(cfg.to_json())))
    assert back == cfg
    with pytest.raises(ValidationError):
        PipelineConfig.from_json({"gate": 3})
    with pytest.raises(ValidationError):
        PipelineConfig.from_json({"hough": {"r_min_mm": -1}})
    with pytest.raises(ValueError):
        PipelineConfig(refine_radius_mm=0)


def test_clean_phantom_pipeline(clean_run, clean_phantom, template):
    result, state, _ = clean_run
    assert result.labels == template.labels
    report = detection_stats(position_errors(result, clean_phantom.truth))
    assert report.accuracy_pct == 100.0
    assert report.mean_pe_mm <= 1.5
    centers = [tuple(c.center) for c in state.candidates]
    for e in result.electrodes:
        if e.source == "hough":
            assert tuple(e.position) in centers
            assert e.assign_dist_mm <= result.config.gate_dist_mm
        else:
            theo = state.registered[e.label]
            assert np.linalg.norm(e.position - theo) <= result.config.refine_radius_mm + 1e-9
    hough_pos = [tuple(e.position) for e in result.electrodes if e.source == "hough"]
    assert len(hough_pos) == len(set(hough_pos))


def test_erased_electrodes_recovered_by_local_max(template):
    erased = ["Fp1", "Cz", "O2", "T7", "CP4", "AF8", "PO9", "FCz"]
    ph = generate_phantom(PhantomSpec(rng_seed=1, erased=erased), template)
    result = detect_electrodes(ph.t1, ph.ute, template)
    assert len(result.electrodes) == 65 and result.labels == template.labels
    by_label = {e.label: e for e in result.electrodes}
    assert sum(e.source == "hough" for e in result.electrodes) >= 57
    for label in erased:
        assert by_label[label].source == "local_max"
    pe = position_errors(result, ph.truth)
    assert max(pe[k] for k in pe if k not in erased) < 10.0


def test_uniform_ute_fails_at_icp(clean_phantom, template):
    flat = Volume3D(np.full(clean_phantom.ute.dims, 60.0, dtype=np.float32), clean_phantom.ute.affine)
    with pytest.raises((EmptyVoi, TooFewCandidates)) as info:
        detect_electrodes(clean_phantom.t1, flat, template)
    assert info.value.stage in ("hough", "icp")


def test_outputs(clean_run, tmp_path):
    result, _, _ = clean_run
    write_electrodes_csv(result, tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "label,x_mm,y_mm,z_mm,source,score,assign_dist_mm"
    assert len(lines) == 66
    back = read_electrodes_csv(tmp_path / "e.csv")
    for e in result.electrodes:
        np.testing.assert_array_equal(back[e.label], e.position)
    obj = electrodes_json(result)
    assert set(obj) >= {"electrodes", "transform", "config"}
    assert obj["config"]["gate_dist_mm"] == result.config.gate_dist_mm
    json.dumps(obj)

