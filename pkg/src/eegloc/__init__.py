"""Automatic detection and labelling of MR-compatible EEG electrodes.

A T1 volume gives the scalp shell, a UTE volume shows the electrodes, and a
spherical cap template registered by ICP assigns channel labels.
"""
from .detection import PipelineConfig, detect_electrodes
from .evaluation import compare_methods, detection_stats, paired_t_test, position_errors
from .hough import HoughParams, SphereCandidate, detect_spheres
from .kernels import BACKEND
from .morphology import BinaryMask, build_voi_shell, dilate, erode, extract_head_mask
from .phantom import PhantomSpec, generate_phantom, perturb_ground_truth
from .registration import ElectrodeTemplate, SimilarityTransform, fiducial_register, icp_register, load_template, umeyama
from .volume_io import Volume3D, read_nifti, voxel_to_world, world_to_voxel, write_nifti

__version__ = "0.1.0"
