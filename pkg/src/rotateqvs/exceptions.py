"""Exception types raised across the package."""


class ZeroNormError(ValueError):
    """A quaternion with (near) zero norm was inverted or normalized."""


class BadAxisError(ValueError):
    """A rotation axis is not a unit vector."""


class MalformedLineError(ValueError):
    def __init__(self, line_no, reason="", path=None):
        self.line_no = line_no
        self.path = path
        where = f"{path}:{line_no}" if path is not None else f"line {line_no}"
        super().__init__(f"malformed quadruple at {where}" + (f": {reason}" if reason else ""))


class UnknownDatasetError(ValueError):
    pass


class EmptyRanksError(ValueError):
    pass


class InfeasibleSpecError(ValueError):
    pass


class ShapeMismatchError(ValueError):
    pass


class UnknownLabelError(KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown label"
