from .method_b_drift import MethodBDriftScenario

__all__ = ["MethodBDriftScenario"]
