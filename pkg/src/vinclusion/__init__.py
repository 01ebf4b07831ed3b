"""Numerical toolkit for Volterra integral inclusions on a uniform grid."""
from .convexsets import Ball, Box, Point, Segment, excess, hausdorff, project, support
from .estimators import SolutionMap
from .fields import AffineBallField, AffineBoxField, SingletonField
from .funnel import Tube, sample_funnel, scalar_envelope_oracle, step_multifunction, usc_probe
from .kernels import ConstantKernel, SemigroupKernel, SeparableKernel
from .operators import ProblemInstance, volterra_apply
from .solvers import periodic_solve, picard_solve, selection_scheme_solve, single_valued_solve
from .timebase import Grid, ScalarTable, Selection, Trajectory

__version__ = "0.1.0"

__all__ = [
    "Grid", "Selection", "Trajectory", "ScalarTable",
    "Point", "Ball", "Box", "Segment", "support", "project", "excess", "hausdorff",
    "ConstantKernel", "SeparableKernel", "SemigroupKernel",
    "SingletonField", "AffineBoxField", "AffineBallField",
    "ProblemInstance", "volterra_apply",
    "picard_solve", "single_valued_solve", "selection_scheme_solve", "periodic_solve",
    "sample_funnel", "scalar_envelope_oracle", "usc_probe", "Tube", "step_multifunction",
    "SolutionMap",
]
