from .closed_loop import ClosedLoopScenario

__all__ = ["ClosedLoopScenario"]
