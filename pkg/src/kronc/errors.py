"""Exception types raised across the package."""


class KroncError(Exception):
    pass


class DegenerateRotation(KroncError, ValueError):
    """The two 3-vectors of a 6D rotation cannot be orthonormalized."""


class NotARotation(KroncError, ValueError):
    pass


class InactiveKeypoint(KroncError, ValueError):
    pass


class NoConstraints(KroncError):
    """No keypoint is observed by enough views to constrain anything."""


class NonFiniteLoss(KroncError, FloatingPointError):
    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite loss or gradient at step {step}")


class ZeroScale(KroncError, ValueError):
    pass


class DegenerateConfiguration(KroncError, ValueError):
    pass


class InvalidConfig(KroncError, ValueError):
    pass
