"""Exception hierarchy shared by the library and the CLI."""


class GLARError(Exception):
    """Base class for every error raised by this package."""


class DataError(GLARError):
    """Problem with input data on disk."""


class LoadError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, path, lineno, line):
        self.path = path
        self.lineno = lineno
        self.line = line
        super().__init__(f"{path}:{lineno}: malformed triple line {line!r}")


class VocabularyError(DataError):
    pass


class ParameterError(GLARError, ValueError):
    pass


class ShapeError(GLARError, ValueError):
    pass


class NumericError(GLARError, FloatingPointError):
    pass
