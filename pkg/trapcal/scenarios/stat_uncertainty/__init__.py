from .stat_uncertainty import StatUncertaintyScenario

__all__ = ["StatUncertaintyScenario"]
