from .geometry_2d import Geometry2DScenario

__all__ = ["Geometry2DScenario"]
