from .rpe_scaling import RpeScalingScenario, RpeMonteCarlo

__all__ = ["RpeScalingScenario", "RpeMonteCarlo"]
