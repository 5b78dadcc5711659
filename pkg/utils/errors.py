class PrivFormError(Exception):
    """Base error for the toolkit; carries a CLI exit code and an HTTP status."""

    exit_code = 1
    http_status = 500


class ConfigError(PrivFormError):
    exit_code = 2
    http_status = 400


class GraphError(ConfigError):
    pass


class DisconnectedGraphError(ConfigError):
    def __init__(self, message="graph is disconnected (lambda2 = 0); steady-state analysis needs a connected graph"):
        super().__init__(message)


class PrivacyDomainError(ConfigError, ValueError):
    pass


class FormationError(ConfigError):
    pass


class InfeasibleProblemError(PrivFormError):
    exit_code = 3
    http_status = 422

    def __init__(self, message, binding=None):
        super().__init__(message)
        self.binding = binding


class UnstableStepSizeError(PrivFormError):
    exit_code = 4
    http_status = 400


class ConvergenceError(PrivFormError):
    exit_code = 5
    http_status = 500

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class EigenSolverError(ConvergenceError):
    pass
