"""Exception types shared across the toolkit."""


class CkbError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgument(CkbError):
    pass


class DuplicateNode(CkbError):
    pass


class DanglingReference(CkbError):
    pass


class NotFound(CkbError):
    pass


class CycleError(CkbError):
    """An edit would create a directed cycle.

    `cycle` is the offending node sequence; following it and then returning
    to its first element traces the cycle.
    """

    def __init__(self, cycle):
        self.cycle = list(cycle)
        loop = " -> ".join(self.cycle + self.cycle[:1])
        super().__init__(f"operation would create the cycle {loop}")


class UnsupportedInfluence(CkbError):
    pass


class UnderspecifiedNode(CkbError):
    pass


class Unparameterised(CkbError):
    pass


class TooLarge(CkbError):
    pass


class InconsistentEvidence(CkbError):
    pass


class IncompleteAssignment(CkbError):
    pass
