"""Exception types raised across the pipeline."""


class ProcOutcomeError(Exception):
    """Base class for every error raised by this package."""


class MissingColumn(ProcOutcomeError):
    def __init__(self, name):
        super().__init__(f"column {name!r} missing from CSV header")
        self.name = name


class UnparsableTimestamp(ProcOutcomeError):
    def __init__(self, row, value):
        super().__init__(f"row {row}: cannot parse timestamp {value!r}")
        self.row = row
        self.value = value


class NonNumericRange(ProcOutcomeError):
    def __init__(self, row, feature, value):
        super().__init__(f"row {row}: range feature {feature!r} has non-numeric value {value!r}")
        self.row = row
        self.feature = feature


class EmptyFile(ProcOutcomeError):
    pass


class DegenerateSplit(ProcOutcomeError):
    pass


class NoOutcomeEvent(ProcOutcomeError):
    def __init__(self, case_id):
        super().__init__(f"case {case_id!r} contains no outcome event")
        self.case_id = case_id


class AllCasesDropped(ProcOutcomeError):
    pass


class UnknownOutcomeActivity(ProcOutcomeError):
    pass


class EmptyLog(ProcOutcomeError):
    pass


class EmptyDataset(ProcOutcomeError):
    pass


class NonFiniteLoss(ProcOutcomeError):
    def __init__(self, epoch, batch):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class ShapeMismatch(ProcOutcomeError, ValueError):
    pass


class IndexOutOfVocabulary(ProcOutcomeError, IndexError):
    pass


class KernelLargerThanInput(ShapeMismatch):
    pass


class InputTooShort(ShapeMismatch):
    pass


class InvalidGeometry(ProcOutcomeError, ValueError):
    pass


class InvalidSpec(ProcOutcomeError, ValueError):
    pass


class ConfigError(ProcOutcomeError):
    """Collects every validation problem found in a run config."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
