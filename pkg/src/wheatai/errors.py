"""Exception hierarchy with stable machine-readable codes.

Every error that can cross a module or API boundary carries a ``code``
string drawn from a closed set; the HTTP layer and per-image warning
records reuse these codes verbatim.
"""

from __future__ import annotations


class WheatAIError(Exception):
    """Base class; ``code`` is a stable identifier, ``message`` is for humans."""

    code = "internal_error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code


# geometry
class DegenerateInput(WheatAIError):
    code = "degenerate_input"


# calibration
class NoFiducials(WheatAIError):
    code = "no_fiducials"


class InconsistentScale(WheatAIError):
    code = "inconsistent_scale"


class InvalidScale(WheatAIError):
    code = "invalid_scale"


# inference backends
class NotADirectory(WheatAIError):
    code = "not_a_directory"


class SchemaViolation(WheatAIError):
    code = "schema_violation"


class MissingPrediction(WheatAIError):
    code = "missing_prediction"


class MissingMask(WheatAIError):
    code = "missing_mask"


class MissingVerdict(WheatAIError):
    code = "missing_verdict"


# pipelines
class InvalidTiling(WheatAIError):
    code = "invalid_tiling"


class NoSpikelets(WheatAIError):
    code = "no_spikelets"


class NoKernels(WheatAIError):
    code = "no_kernels"


class NoStomata(WheatAIError):
    code = "no_stomata"


class DegenerateMask(WheatAIError):
    code = "degenerate_mask"


class CalibrationRequired(WheatAIError):
    code = "calibration_required"


# export
class DimensionMismatch(WheatAIError):
    code = "dimension_mismatch"


class SchemaMismatch(WheatAIError):
    code = "schema_mismatch"


# jobs
class UnknownPipeline(WheatAIError):
    code = "unknown_pipeline"


class UnknownImage(WheatAIError):
    code = "unknown_image"


class InvalidParams(WheatAIError):
    code = "invalid_params"


class UnknownJob(WheatAIError):
    code = "unknown_job"


class JobNotFinished(WheatAIError):
    code = "job_not_finished"


# warning codes that are not exceptions but share the registry
WARNING_CODES = frozenset(
    {
        "no_assessable_spikes",
        "spike_without_spikelets",
        "no_kernels",
        "no_stomata",
        "no_spikelets",
        "no_fiducials",
        "degenerate_mask",
        "duplicate_pore",
        "missing_prediction",
        "all_images_failed",
        "interrupted",
    }
)
