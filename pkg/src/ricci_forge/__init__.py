"""Numerical verification of prescribed partial Ricci and mixed scalar curvature."""

from .chart import Chart, MetricField, SplitDistribution
from .conformal import ConformalChange
from .curvature import curvature_pack, extrinsic_pack, sectional
from .scenario import Scenario
from .solutions import SolutionFamily, classify_singularity, list_families
from .variational import VariationScenario

__all__ = [
    "Chart", "MetricField", "SplitDistribution", "ConformalChange", "curvature_pack",
    "extrinsic_pack", "sectional", "Scenario", "SolutionFamily", "classify_singularity",
    "list_families", "VariationScenario",
]

__version__ = "0.1.0"
