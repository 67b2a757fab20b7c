"""
Error types raised across the scheduling simulator and the agent.
"""


class SchedulingError(Exception):
    """Base class for every error raised by spot_scheduler"""


class InvalidArgumentError(SchedulingError, ValueError):
    """A function received an argument outside its domain"""


class CycleError(SchedulingError):
    """The workflow edge relation contains a cycle"""

    def __init__(self, message, edge=None):
        super().__init__(message)
        self.edge = edge


class DanglingReferenceError(SchedulingError):
    """An edge or lookup names a task that does not exist"""


class ConfigurationError(SchedulingError):
    """A cluster, workload or training document is malformed"""


class InvalidActionError(SchedulingError):
    """The chosen node is dead, inadmissible or unknown"""


class NoFeasibleActionError(SchedulingError):
    """Every action is masked out"""


class NumericError(SchedulingError):
    """Network parameters or outputs are not finite"""


class InvalidStateError(SchedulingError):
    """An operation was called in a state that does not allow it"""


class LayoutMismatchError(SchedulingError):
    """A checkpoint does not match the cluster's action-space layout"""


class ContractViolationError(SchedulingError):
    """A caller broke an operation's contract (e.g. interrupting an on-demand node)"""
