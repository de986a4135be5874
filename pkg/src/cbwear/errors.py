"""Shared exception types for the pipeline."""


class CbwearError(Exception):
    """Base class for all pipeline errors."""


# --- ingestion / data model ---

class MalformedRow(CbwearError):
    def __init__(self, line_no, detail=""):
        self.line_no = line_no
        super().__init__(f"malformed row at line {line_no}: {detail}")


class ChannelLengthMismatch(CbwearError):
    pass


class SampleRateMismatch(CbwearError):
    pass


class UnknownBehavior(CbwearError):
    def __init__(self, raw):
        self.raw = raw
        super().__init__(f"behavior {raw!r} is not covered by the taxonomy")


# --- preprocessing / segmentation ---

class EmptyTrainingSet(CbwearError):
    pass


class SequenceTooShort(CbwearError):
    pass


class RecordingTooShort(CbwearError):
    pass


# --- shallow baselines ---

class KTooLarge(CbwearError):
    pass


# --- differentiable core ---

class ShapeMismatch(CbwearError):
    def __init__(self, where, expected, got):
        super().__init__(f"{where}: expected {expected}, got {got}")


class TapeConsumed(CbwearError):
    pass


class LabelOutOfRange(CbwearError):
    pass


class PatchLengthIndivisible(CbwearError):
    pass


# --- training protocol ---

class TooFewSubjects(CbwearError):
    pass


class NoPositives(CbwearError):
    pass


class NoNegatives(CbwearError):
    pass


class SingleClass(CbwearError):
    pass


class DivergedLoss(CbwearError):
    pass


class MissingClassInTrain(CbwearError):
    pass


# --- interpretation ---

class UntrainedModel(CbwearError):
    pass


class NoConvLayer(CbwearError):
    pass


# --- synthetic cohort ---

class InvalidConfig(CbwearError):
    pass


class EmptyCorpus(CbwearError):
    pass


# --- CLI ---

class MissingInput(CbwearError):
    def __init__(self, stage):
        self.stage = stage
        super().__init__(f"required output of stage {stage!r} not found; run it first")


class ConfigError(CbwearError):
    def __init__(self, key, detail=""):
        self.key = key
        super().__init__(f"config key {key!r}: {detail}" if detail else f"unknown config key {key!r}")
