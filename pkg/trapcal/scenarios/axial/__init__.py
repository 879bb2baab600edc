from .axial import AxialScenario

__all__ = ["AxialScenario"]
