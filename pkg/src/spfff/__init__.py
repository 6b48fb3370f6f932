"""Space-filling split-plot designs by two-stage Ward clustering."""

__version__ = "0.1.0"

from .core import (CriteriaReport, Design, DesignError, DesignSpec, SpecError, read_design,
                   sample_uniform, scale_to_boundary, validate_spec, write_design)
from .criteria import i_optimality, maximin, minimax_mc, phi_p, evaluate_design
from .ward import cluster_until, fff_design, spfff_design

__all__ = [
    "CriteriaReport", "Design", "DesignError", "DesignSpec", "SpecError", "read_design",
    "sample_uniform", "scale_to_boundary", "validate_spec", "write_design",
    "i_optimality", "maximin", "minimax_mc", "phi_p", "evaluate_design",
    "cluster_until", "fff_design", "spfff_design",
]
