"""Exception hierarchy shared by every module of the package."""


class FarmTfpError(Exception):
    """Base class for all package errors.

    ``module`` names the component that raised, so the command line can
    report where a failure originated.
    """

    module = "farmtfp"

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context

    def __str__(self):
        msg = super().__str__()
        if self.context:
            extra = ", ".join(f"{k}={v!r}" for k, v in self.context.items())
            msg = f"{msg} ({extra})"
        return msg


class PanelError(FarmTfpError):
    module = "panel"


class DuplicateKeyError(PanelError):
    pass


class TransformStateError(PanelError):
    pass


class NonPositiveValueError(PanelError):
    pass


class MissingIndexError(PanelError):
    pass


class VariableError(FarmTfpError):
    module = "fadn"


class InstrumentConfigError(FarmTfpError):
    module = "instruments"


class NoUsableEquationsError(InstrumentConfigError):
    pass


class SingularMatrixError(FarmTfpError):
    """Raised when a solve meets a rank-deficient matrix.

    ``labels`` lists the column labels implicated in the deficient
    directions.
    """

    module = "gmm"

    def __init__(self, message, labels=(), **context):
        super().__init__(message, **context)
        self.labels = tuple(labels)

    def __str__(self):
        base = super().__str__()
        if self.labels:
            return f"{base}; deficient directions involve: {', '.join(self.labels)}"
        return base


class EstimationError(FarmTfpError):
    module = "gmm"


class DiagnosticsError(FarmTfpError):
    module = "diagnostics"


class MinimumDistanceError(FarmTfpError):
    module = "production"


class AcfError(FarmTfpError):
    module = "acf"


class ConvergenceError(AcfError):
    def __init__(self, message, best=None, trace=(), **context):
        super().__init__(message, **context)
        self.best = best
        self.trace = list(trace)


class GroupingError(AcfError):
    pass


class ImpactError(FarmTfpError):
    module = "impact"


class PipelineError(FarmTfpError):
    module = "cli"


class StaleArtifactError(PipelineError):
    pass


class NothingToReportError(PipelineError):
    pass
