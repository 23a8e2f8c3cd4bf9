"""Modular robust estimation of two-view geometry.

Homographies, fundamental and essential matrices are estimated by a
hypothesize-and-verify loop whose sampling, verification, model quality,
degeneracy handling, local optimization and termination are all pluggable.
"""
from .core import (Correspondence, CorrespondenceSet, DegenerateNormalizationError,
                   EstimationModel, Intrinsics, ModelKind, ModelKindError,
                   NonInvertibleHomographyError)
from .engine import (EngineConfig, RunResult, TerminationKind, VerifyKind, plain_ransac_config,
                     required_iterations_standard, run)
from .localopt import LoConfig, LoKind
from .samplers import SamplerKind
from .scoring import QualityKind, Score

__all__ = [
    "Correspondence", "CorrespondenceSet", "DegenerateNormalizationError", "EstimationModel",
    "Intrinsics", "ModelKind", "ModelKindError", "NonInvertibleHomographyError",
    "EngineConfig", "RunResult", "TerminationKind", "VerifyKind", "plain_ransac_config",
    "required_iterations_standard", "run", "LoConfig", "LoKind", "SamplerKind", "QualityKind",
    "Score",
]
