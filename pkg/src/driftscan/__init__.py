"""Unsupervised floating-object detection for maritime imagery.

The pipeline learns a sparse dictionary from each frame, reconstructs the
frame's self-similar content, and statistically tests the reconstruction
residual for salient structure with a number-of-false-alarms bound.
"""

__version__ = "0.1.0"

from .acontrario import (  # noqa: F401
    Detection,
    GgdFit,
    TestBudget,
    compute_test_budget,
    detect,
    fit_ggd,
    gaussianize,
    log_nfa,
    standardize_filtered,
)
from .errors import DriftscanError, FrameError, PipelineError  # noqa: F401
from .geometry import (  # noqa: F401
    BoundingBox,
    InterestPoint,
    boxes_from_detections,
    detect_interest_points,
    fuse_overlapping,
    keypoint_refine,
)
from .imaging import (  # noqa: F401
    DiskKernel,
    PatchMatrix,
    build_pyramid,
    convolve_disk,
    disk_kernel,
    extract_patches,
    load_frame,
    place_patches,
)
from .evaluation import EvalReport, evaluate, iou, load_ground_truth  # noqa: F401
from .pipeline import (  # noqa: F401
    FrameResult,
    PipelineConfig,
    render_overlay,
    run_frame,
    run_sequence,
)
from .sparse import (  # noqa: F401
    DenoiseParams,
    DenoiseResult,
    SparseCode,
    coding_error,
    denoise,
    init_dictionary,
    ksvd_iterate,
    ormp,
    residual,
    sparse_code,
    sparse_code_monotone,
)
