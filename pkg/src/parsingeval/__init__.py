"""Evaluation and analysis toolkit for multiple human parsing.

Part-level instance metrics (AP^p, AP^p_vol, PCP_50), semantic metrics,
parsing re-scoring targets and score fusion, the global/instance map
combination, and ground-truth swap (upper-bound) experiments.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    PROTOCOL_VERSION,
    Box,
    CategorySet,
    ImageRecord,
    Instance,
    InvalidInputError,
    LabelMap,
    ProbMap,
    ValidationError,
)
from .kernels import BACKEND  # noqa: E402
