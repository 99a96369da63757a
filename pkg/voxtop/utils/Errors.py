import typing

from voxtop.utils.Constants import ExitCodes


class VoxtopError(Exception):
    """
    Base class for all voxtop errors

    exitcode is the CLI exit status used when the error escapes a command
    """

    exitcode = ExitCodes.failure


class DomainError(VoxtopError, ValueError):
    pass


class MaterialError(VoxtopError, ValueError):
    pass


class ConvergenceError(VoxtopError):
    exitcode = ExitCodes.numerical

    def __init__(
        self,
        message: str,
        residuals: typing.Sequence[float] = (),
        iteration: typing.Optional[int] = None,
    ):
        """
        PCG failed to reach its tolerance within the iteration cap

        residuals holds the relative residual history of the failed solve; iteration is the
        SIMP iteration the solve belonged to, when raised from inside the optimizer
        """
        super().__init__(message)
        self.residuals = list(residuals)
        self.iteration = iteration

    def __str__(self):
        msg = super().__str__()
        if self.iteration is not None:
            msg = f"{msg} (SIMP iteration {self.iteration})"
        if self.residuals:
            msg = f"{msg}, final relative residual {self.residuals[-1]:.3e}"
        return msg


class OptimizerError(VoxtopError):
    exitcode = ExitCodes.numerical


class DatasetError(VoxtopError):
    exitcode = ExitCodes.dataset_format


class BadMagicError(DatasetError):
    pass


class TruncatedFileError(DatasetError):
    pass


class VersionMismatchError(DatasetError):
    pass


class RecordInvariantError(DatasetError, ValueError):
    pass


class NetworkShapeError(VoxtopError, ValueError):
    pass


class TrainingError(VoxtopError):
    exitcode = ExitCodes.numerical

    def __init__(self, message: str, epoch: int = None, step: int = None):
        super().__init__(f"{message} (epoch {epoch}, step {step})")
        self.epoch = epoch
        self.step = step


class ConfigError(VoxtopError, ValueError):
    exitcode = ExitCodes.config


class MissingInputError(VoxtopError, FileNotFoundError):
    exitcode = ExitCodes.missing_input
