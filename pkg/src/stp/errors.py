"""Exception hierarchy shared by every pipeline stage."""


class StpError(Exception):
    """Base class; the CLI maps these to exit code 1."""


class ValidationError(StpError, ValueError):
    pass


class OverlapError(ValidationError):
    pass


class EmptyIntervalError(ValidationError):
    pass


class OutOfRangeError(ValidationError):
    pass


class EmptyAudioError(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class EmptyCorpusError(ValidationError):
    pass


class EmptySentenceError(ValidationError):
    pass


class EmptyTextError(ValidationError):
    pass


class InsufficientLanguagesError(ValidationError):
    pass


class VocabMismatchError(ValidationError):
    pass


class EmptyEnsembleError(ValidationError):
    pass


class SearchSpaceTooLargeError(ValidationError):
    pass


class AlignmentError(ValidationError):
    pass


class MissingFrameCountError(ValidationError):
    pass


class EmptyReferenceError(ValidationError):
    pass


class LengthMismatchError(ValidationError):
    pass
