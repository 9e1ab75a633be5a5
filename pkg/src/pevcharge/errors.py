"""Exception hierarchy shared by the library and the CLI."""


class PevChargeError(Exception):
    """Base class for all errors raised by this package."""


class InputError(PevChargeError, ValueError):
    """Bad user input: malformed files, invalid configuration, wrong shapes."""


class ChargeExceedsQueue(PevChargeError):
    """Charging more energy than the battery can still absorb."""


class NegativeInput(InputError):
    pass


class ResampleLimitExceeded(PevChargeError):
    pass


class EmptyDrivingWindow(InputError):
    pass


class MalformedProfile(InputError):
    pass


class WrongLength(MalformedProfile):
    pass


class BracketInvalid(PevChargeError):
    """The U_ref bisection bracket does not enclose the aggregator fixed point."""


class Infeasible(PevChargeError):
    """No schedule satisfies the daily energy balance for some vehicle."""

    def __init__(self, message: str, vehicle: int | None = None, day: int | None = None):
        super().__init__(message)
        self.vehicle = vehicle
        self.day = day


class NotConverged(PevChargeError):
    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class TooLarge(InputError):
    pass


class InfeasibleSchedule(PevChargeError):
    pass


class NotStrictlyFeasible(PevChargeError):
    pass


class ScenarioMismatch(InputError):
    pass


class SlotError(PevChargeError):
    """Wraps an error raised while processing one slot of a horizon run."""

    def __init__(self, slot: int, cause: Exception):
        super().__init__(f"slot {slot}: {cause}")
        self.slot = slot
        self.cause = cause
