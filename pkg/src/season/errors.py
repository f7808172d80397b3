"""Exception hierarchy.

``InputError`` subclasses describe bad user input and map to CLI exit code 2;
everything else deriving from ``SeasonError`` is an internal failure.
"""


class SeasonError(Exception):
    pass


class InputError(SeasonError):
    pass


class EmptyDocument(InputError):
    pass


class EmptySummary(InputError):
    pass


class EmptyReference(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateId(InputError):
    pass


class MissingReference(InputError):
    pass


class MissingLabels(InputError):
    pass


class IdMismatch(InputError):
    pass


class InsufficientGrid(InputError):
    pass


class ShapeMismatch(SeasonError):
    def __init__(self, op, *shapes):
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes {' vs '.join(str(tuple(s)) for s in shapes)}")


class LossNotScalar(SeasonError):
    pass


class SequenceTooLong(SeasonError):
    pass


class NonFiniteGradient(SeasonError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"non-finite gradient in parameter {name!r}")
