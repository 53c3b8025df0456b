"""Exception hierarchy shared across the toolkit.

Every error raised on purpose derives from :class:`TTPerceptError` so the CLI
can map it to an exit code.
"""


class TTPerceptError(Exception):
    exit_code = 1


# geometry
class BehindCamera(TTPerceptError):
    pass


class DegenerateGeometry(TTPerceptError):
    pass


class InsufficientObservations(TTPerceptError):
    pass


class EmptyInput(TTPerceptError):
    pass


# physics / spin
class InvalidDt(TTPerceptError):
    pass


class TooFewSamples(TTPerceptError):
    pass


class NonPositiveRate(TTPerceptError):
    pass


class TooFewDots(TTPerceptError):
    pass


class NoConsensus(TTPerceptError):
    pass


# calibration
class NoVisibility(TTPerceptError):
    pass


class AmbiguousFrequency(TTPerceptError):
    pass


class InsufficientCorrespondences(TTPerceptError):
    pass


class DegenerateMotion(TTPerceptError):
    pass


class DivergedOptimization(TTPerceptError):
    exit_code = 4


class SingularNormalEquations(TTPerceptError):
    exit_code = 4


# events / snn
class BallNotVisible(TTPerceptError):
    pass


class OutOfRange(TTPerceptError):
    pass


class ShapeMismatch(TTPerceptError):
    pass


class EmptyDataset(TTPerceptError):
    pass


class DivergedLoss(TTPerceptError):
    exit_code = 4


class ConfigError(TTPerceptError):
    exit_code = 3
