"""WheatAI: deterministic image-based wheat phenotyping pipelines.

Converts images plus oriented-box model predictions into standardized trait
measurements (spike/spikelet counts, FHB incidence/severity/index, FDK ratio,
kernel and stomata morphometrics), served through a batch-job engine, an HTTP
API and a CLI.
"""

__version__ = "0.1.0"

from .geom import (  # noqa: F401
    ConvexPolygon,
    OrientedBox,
    Point2,
    convex_intersection,
    min_area_rect,
    obb_corners,
    obb_nms,
    polygon_area,
    rotated_iou,
)
from .calib import (  # noqa: F401
    FiducialDetection,
    MarkerDictionary,
    ScaleCalibration,
    Unit,
    calibration_from_fiducials,
    calibration_manual,
    convert_measurement,
    default_dictionary,
    detect_fiducials,
)
from .infer import (  # noqa: F401
    Detection,
    DetectionSet,
    InferenceParams,
    MaskSegment,
    Verdict,
    classify,
    detect,
    open_fixture_backend,
    postprocess,
    segment,
)
from .counting import (  # noqa: F401
    SpikeCountResult,
    SpikeletAssignment,
    TileGrid,
    associate_spikelets,
    count_spikes,
    plan_tiles,
    spikes_per_area,
    tile_and_merge,
)
from .disease import (  # noqa: F401
    FDKResult,
    FHBSummary,
    SpikeFHBRecord,
    fdk_assess,
    fhb_field_pipeline,
    fhb_metrics,
    fhb_single_spike,
)
from .morpho import (  # noqa: F401
    KernelRecord,
    StomaRecord,
    StomataSummary,
    associate_pores,
    kernel_morphometrics,
    mask_dimensions,
    stomata_morphometrics,
)
from .jobs import JobEngine, JobRecord, JobSpec  # noqa: F401
from .pipelines import PIPELINES, list_descriptors, validate_params  # noqa: F401
