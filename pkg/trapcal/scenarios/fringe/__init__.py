from .fringe import FringeScenario, count_zero_crossings

__all__ = ["FringeScenario", "count_zero_crossings"]
