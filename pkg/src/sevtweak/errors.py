"""Exception hierarchy shared by the simulator and the attack toolkit."""


class SevTweakError(Exception):
    """Base class for every error raised by this package."""


class AddressOutOfRange(SevTweakError):
    pass


class UnalignedAccess(SevTweakError):
    pass


class Inconsistent(SevTweakError):
    """A linear system received a row that contradicts the rows before it."""


class Underdetermined(SevTweakError):
    """The linear system does not pin down every unknown."""

    def __init__(self, rank, free):
        self.rank = rank
        self.free = tuple(free)
        super().__init__(f"rank {rank} < 30; free unknowns: {list(self.free)}")


class PageCountTooSmall(SevTweakError):
    pass


class PayloadTooLarge(SevTweakError):
    pass


class UnalignedLength(SevTweakError):
    pass


class BridgeNotFound(SevTweakError):
    pass


class AmbiguousBridge(SevTweakError):
    def __init__(self, candidates):
        self.candidates = list(candidates)
        super().__init__(
            "multiple bridge candidates: " + ", ".join(hex(c) for c in self.candidates)
        )


class CcNotFound(SevTweakError):
    pass
