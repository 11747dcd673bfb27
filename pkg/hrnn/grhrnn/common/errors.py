class HrnnError(Exception):
    """
    Base class of the errors raised by the library, scripts catch it and exit with a nonzero code
    """


class ShapeError(HrnnError):
    pass


class NonFiniteError(HrnnError):
    pass


class TapeError(HrnnError):
    pass


class ScheduleError(HrnnError):
    pass


class LedgerError(HrnnError):
    pass


class ConfigError(HrnnError):
    pass


class DataFormatError(HrnnError):
    pass


class TrainingDivergedError(HrnnError):
    pass


class TargetError(HrnnError):
    pass
