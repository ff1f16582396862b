import time

import numpy as np
import pytest

from eegloc.detection import PipelineState, detect_electrodes

from eegloc.morphology import BinaryMask
from eegloc.phantom import PhantomSpec, generate_phantom
from eegloc.registration import load_template
from eegloc.volume_io import Volume3D

# lines pushed by the acceptance module, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def template():
    return load_template()


@pytest.fixture(scope="session")
def noisy_phantom(template):
    return generate_phantom(PhantomSpec(rng_seed=0), template)


@pytest.fixture(scope="session")
def clean_phantom(template):
    return generate_phantom(PhantomSpec(rng_seed=0, t1_noise_sigma=0.0, ute_noise_sigma=0.0), template)


def sphere_volume(center, radius, dims=(101, 101, 101), spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0),
                  bg=10.0, fg=200.0):
    """Solid sphere with a one-voxel partial-volume edge."""
    vol = Volume3D.from_array(np.zeros(dims, dtype=np.float32), spacing, origin)
    idx = np.indices(dims).reshape(3, -1).T
    world = idx * np.asarray(spacing) + np.asarray(origin)
    occ = np.zeros(len(idx))
    for c in np.atleast_2d(center):
        occ = np.maximum(occ, np.clip(radius + 0.5 - np.linalg.norm(world - c, axis=1), 0.0, 1.0))
    vol.data[...] = (bg + (fg - bg) * occ).reshape(dims)
    return vol


def full_mask(vol):
    return BinaryMask(np.ones(vol.dims, dtype=bool), vol.affine.copy())


@pytest.fixture(scope="session")
def clean_run(clean_phantom, template):
    """Detection on the noiseless phantom: (result, state, seconds)."""
    state = PipelineState()
    t0 = time.perf_counter()
    result = detect_electrodes(clean_phantom.t1, clean_phantom.ute, template, state=state)
    return result, state, time.perf_counter() - t0


@pytest.fixture(scope="session")
def cli_chain(tmp_path_factory):
    """Run ``phantom -> detect -> eval`` through the CLI; cached per (seed, workers, tag)."""
    from eegloc.cli import main

    cache = {}

    def run(seed=0, workers=1, tag="a"):
        key = (seed, workers, tag)
        if key not in cache:
            out = tmp_path_factory.mktemp(f"chain_s{seed}_w{workers}_{tag}")
            ph = out / "phantom"
            codes = [
                main(["phantom", "--out-dir", str(ph), "--seed", str(seed)]),
                main(["detect", "--t1", str(ph / "t1.nii"), "--ute", str(ph / "ute.nii"),
                      "--out", str(out / "electrodes.csv"), "--json", str(out / "electrodes.json"),
                      "--workers", str(workers)]),
                main(["eval", "--detected", str(out / "electrodes.csv"), "--truth", str(ph / "truth.csv"),
                      "--report", str(out / "report.json")]),
            ]
            cache[key] = (out, codes)
        return cache[key]

    return run
