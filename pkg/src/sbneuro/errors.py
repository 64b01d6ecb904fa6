"""Exception hierarchy.

Two families: ``InputError`` for bad arguments, configs and data files
(CLI exit code 2) and ``NumericalError`` for solver or integrator failures
(CLI exit code 3).
"""


class SbNeuroError(Exception):
    pass


class InputError(SbNeuroError, ValueError):
    pass


class NumericalError(SbNeuroError, ArithmeticError):
    pass


class NonConvergence(NumericalError):
    def __init__(self, message, residual=None, bias=None):
        super().__init__(message)
        self.residual = residual
        self.bias = bias


class ThresholdOutOfRange(NumericalError):
    pass


class NonFiniteState(NumericalError):
    pass


class DegenerateFit(NumericalError):
    pass


class TooFewPoints(InputError):
    pass


class NonUniformBias(InputError):
    pass


class ZeroVds(InputError):
    pass


class NonPositiveCurrent(InputError):
    pass


class InconsistentRatio(InputError):
    pass


class EmptyPartition(InputError):
    pass
