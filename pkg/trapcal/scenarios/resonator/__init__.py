from .resonator import ResonatorScenario

__all__ = ["ResonatorScenario"]
