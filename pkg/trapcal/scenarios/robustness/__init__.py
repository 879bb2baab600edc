from .robustness import RobustnessScenario, RobustEstimator

__all__ = ["RobustnessScenario", "RobustEstimator"]
