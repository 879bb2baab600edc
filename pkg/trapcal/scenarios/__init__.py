from typing import Dict, Type

from trapcal.errors import ScenarioUnknown
from trapcal.scenario import Scenario

from .axial import AxialScenario
from .closed_loop import ClosedLoopScenario
from .fringe import FringeScenario
from .geometry_2d import Geometry2DScenario
from .method_b_drift import MethodBDriftScenario
from .resonator import ResonatorScenario
from .robustness import RobustnessScenario
from .rpe_scaling import RpeScalingScenario
from .stat_uncertainty import StatUncertaintyScenario

SCENARIOS: Dict[str, Type[Scenario]] = {
    cls.name: cls
    for cls in (
        FringeScenario,
        MethodBDriftScenario,
        ClosedLoopScenario,
        RobustnessScenario,
        RpeScalingScenario,
        Geometry2DScenario,
        AxialScenario,
        StatUncertaintyScenario,
        ResonatorScenario,
    )
}


def get_scenario(name: str) -> Type[Scenario]:
    """
    :raises ScenarioUnknown: If no scenario is registered under ``name``
    """
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ScenarioUnknown(name) from None


__all__ = ["SCENARIOS", "get_scenario"] + [cls.__name__ for cls in SCENARIOS.values()]
