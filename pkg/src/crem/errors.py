"""Exception hierarchy for the CREM toolkit."""


class CremError(Exception):
    """Base class for all errors raised by this package."""


class ProfileError(CremError, ValueError):
    pass


class MonotonicityViolation(ProfileError):
    pass


class EndpointViolation(ProfileError):
    pass


class NonlinearNearZero(ProfileError):
    pass


class DegenerateProfile(ProfileError):
    pass


class DomainError(CremError, ValueError):
    pass


class BoundViolated(CremError):
    def __init__(self, message, y=None, z=None):
        super().__init__(message)
        self.y = y
        self.z = z


class DepthTooLarge(CremError, ValueError):
    pass


class SplitOutOfRange(CremError, ValueError):
    pass


class MissingInternalNodes(CremError, ValueError):
    pass


class QuadratureOrderExceeded(CremError, ValueError):
    pass


class Supercritical(CremError, ValueError):
    pass


class NotPositive(CremError, ValueError):
    pass


class GammaOutOfRange(CremError, ValueError):
    pass


class DegenerateEta(CremError, ValueError):
    pass


class ConfigParseError(CremError, ValueError):
    pass
