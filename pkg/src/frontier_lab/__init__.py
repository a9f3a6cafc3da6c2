"""frontier_lab: a compact laboratory for prediction-guided frontier exploration.

Simulated 2D occupancy worlds, a ray-cast range sensor, a map-prediction
ensemble interface, frontier detection/scoring, classical and learned
planners, a benchmark harness, and a small web service for human-subject
exploration sessions.
"""

from .grids import (
    FREE,
    OCCUPIED,
    UNKNOWN,
    OccupancyGrid,
    Pose,
    ProbabilityGrid,
    generate_floorplan,
    load_map,
    save_map,
)

__version__ = "0.1.0"

__all__ = [
    "FREE",
    "UNKNOWN",
    "OCCUPIED",
    "OccupancyGrid",
    "ProbabilityGrid",
    "Pose",
    "generate_floorplan",
    "load_map",
    "save_map",
    "__version__",
]
