"""Hermite needlet frames, weighted Besov/Triebel-Lizorkin norms, weights and embedding probes."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CalibrationError,
    ConstraintError,
    ConvergenceError,
    HermiteSpacesError,
    QuadratureError,
    ResourceError,
    ValidationError,
    ZeroFinderError,
)
from .hermite_core import HermiteExpansion, christoffel, hermite_table, hermite_zeros  # noqa: E402
from .multipliers import MultiplierSystem, build_partition_system, build_tight_system, dual_system  # noqa: E402
from .tiles import TileGrid, build_grid, level_size  # noqa: E402
from .frames import FrameSequence, analyze, synthesize  # noqa: E402
from .weights import Weight, ahp_certificate  # noqa: E402
from .norms import SpaceParams, besov_norm, seq_besov_norm, seq_triebel_norm, triebel_norm  # noqa: E402
from .embedding import EmbeddingParams, lower_bound_balls, lower_bound_tiles, necessity_probe, sufficiency_probe  # noqa: E402

__all__ = [
    "CalibrationError",
    "ConstraintError",
    "ConvergenceError",
    "EmbeddingParams",
    "FrameSequence",
    "HermiteExpansion",
    "HermiteSpacesError",
    "MultiplierSystem",
    "QuadratureError",
    "ResourceError",
    "SpaceParams",
    "TileGrid",
    "ValidationError",
    "Weight",
    "ZeroFinderError",
    "ahp_certificate",
    "analyze",
    "besov_norm",
    "build_grid",
    "build_partition_system",
    "build_tight_system",
    "christoffel",
    "dual_system",
    "hermite_table",
    "hermite_zeros",
    "level_size",
    "lower_bound_balls",
    "lower_bound_tiles",
    "necessity_probe",
    "seq_besov_norm",
    "seq_triebel_norm",
    "sufficiency_probe",
    "synthesize",
    "triebel_norm",
    "__version__",
]
