"""
Protocol contracts shared by the graph builders and the harness.
"""

from typing import Protocol, TYPE_CHECKING

if TYPE_CHECKING:
    from popgraph.cohort import Cohort
    from popgraph.graph import PopulationGraph
    from popgraph.models import BuilderConfig


class GraphBuilder(Protocol):
    """
    A population-graph construction method.

    Builders are pure functions of (cohort, config); only the random builder
    consumes ``config.seed``.
    """

    def __call__(self, cohort: "Cohort", config: "BuilderConfig") -> "PopulationGraph":
        ...
