"""Exception types shared across the package."""


class KrevError(Exception):
    pass


class InputTooLong(KrevError):
    """Duplexing input exceeds the single-block limit (rate - 2 bits)."""


class EmptyChildren(KrevError):
    pass


class BadBlockLength(KrevError):
    pass


class DuplicateSerial(KrevError):
    pass


class UnknownSerial(KrevError):
    pass


class UnknownObu(KrevError):
    pass


class Infeasible(KrevError):
    """No branching factor satisfies the memory constraint."""


class VersionMismatch(KrevError):
    pass


class InvalidImpeachment(KrevError):
    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


class ConfigInvalid(KrevError):
    pass


class FormatError(KrevError):
    """Malformed serialized tree, proof, or message bytes."""
