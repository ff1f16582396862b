"""Exception hierarchy.

Every error carries the pipeline ``stage`` that raised it so the command
line can report where a run failed. :class:`IoError` subclasses map to exit
code 2, everything else deriving from :class:`EegLocError` maps to 1.
"""


class EegLocError(Exception):
    stage = "eegloc"

    def __init__(self, message, stage=None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage

    def __str__(self):
        return f"[{self.stage}] {super().__str__()}"


class ValidationError(EegLocError, ValueError):
    pass


class IoError(EegLocError, OSError):
    stage = "io"


# volume_io
class MissingFile(IoError):
    pass


class BadMagic(IoError):
    pass


class UnsupportedDatatype(IoError):
    pass


class TruncatedData(IoError):
    pass


class IoFailure(IoError):
    pass


# morphology
class ConstantVolume(ValidationError):
    stage = "head_mask"


class NoForeground(ValidationError):
    stage = "head_mask"


class NegativeRadius(ValidationError):
    stage = "morphology"


class EmptyHeadMask(ValidationError):
    stage = "voi"


# sphere_hough
class VolumeTooSmall(ValidationError):
    stage = "hough"


class EmptyVoi(ValidationError):
    stage = "hough"


class GeometryMismatch(ValidationError):
    stage = "hough"


# registration
class DuplicateLabel(ValidationError):
    stage = "template"


class NonUnitVector(ValidationError):
    stage = "template"


class MissingFiducial(ValidationError):
    stage = "template"


class TooFewPoints(ValidationError):
    stage = "registration"


class DegenerateConfiguration(ValidationError):
    stage = "registration"


class TooFewCandidates(ValidationError):
    stage = "icp"


# evaluation
class LabelMismatch(ValidationError):
    stage = "evaluation"


class EmptyInput(ValidationError):
    stage = "evaluation"


class LengthMismatch(ValidationError):
    stage = "evaluation"


class ZeroVariance(ValidationError):
    stage = "evaluation"


# phantom / pancake
class ElectrodeOverlap(ValidationError):
    stage = "phantom"


class DegeneratePoint(ValidationError):
    stage = "pancake"
