from typing import Iterable, List


class TrapcalError(Exception):
    """Base class for every error raised by trapcal"""


class DomainError(TrapcalError, ValueError):
    """A physics or estimation precondition does not hold"""


class IonLost(DomainError):
    pass


class DegenerateDirection(DomainError):
    pass


class LengthMismatch(DomainError):
    pass


class UnknownId(DomainError):
    pass


class ZeroDenominator(DomainError):
    pass


class Undefined(DomainError):
    pass


class OddM(DomainError):
    pass


class BadSchedule(DomainError):
    pass


class RangeOverflow(DomainError):
    pass


class RankDeficient(DomainError):
    pass


class NoProgress(DomainError):
    pass


class TooShort(DomainError):
    pass


class ConfigInvalid(TrapcalError):
    """
    Raised by :func:`trapcal.config.validate_config` with every violation found

    :param errors: One human readable message per violation
    """

    def __init__(self, errors: Iterable[str]):
        self.errors: List[str] = list(errors)
        super().__init__(
            f"{len(self.errors)} configuration error(s):\n  - "
            + "\n  - ".join(self.errors)
        )


class ScenarioUnknown(TrapcalError, KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(name)

    def __str__(self) -> str:
        return f"Unknown scenario '{self.name}'"
