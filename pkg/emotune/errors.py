from typing import Optional

__all__ = (
    'EmotuneError',
    'DataError',
    'UsageError',
    'TruncatedInput',
    'MalformedVlq',
    'MalformedEvent',
    'UnsupportedDivision',
    'BadHeader',
    'InvariantViolation',
    'EmptySequence',
    'DegenerateCorpus',
    'CatalogMismatch',
    'KTooLarge',
    'EmptyQuadrant',
    'LengthMismatch',
    'ShapeMismatch',
    'NonFiniteLoss',
    'EmptyManifest',
    'SingletonClass',
    'ConfigError',
    'StageError',
    'exit_code_for',
)

class EmotuneError(Exception):
    """Base class of every error raised by this library."""
    category: str = 'internal'

class DataError(EmotuneError, ValueError):
    """The input data is malformed or does not satisfy a precondition."""
    category = 'data'

class UsageError(EmotuneError, ValueError):
    """The caller asked for something that cannot be done with these arguments."""
    category = 'usage'

class TruncatedInput(DataError):
    pass

class MalformedVlq(DataError):
    pass

class MalformedEvent(DataError):
    pass

class UnsupportedDivision(DataError):
    pass

class BadHeader(DataError):
    pass

class InvariantViolation(DataError):
    pass

class EmptySequence(DataError):
    pass

class DegenerateCorpus(DataError):
    pass

class CatalogMismatch(DataError):
    pass

class EmptyQuadrant(DataError):
    pass

class LengthMismatch(DataError):
    pass

class ShapeMismatch(DataError):
    pass

class EmptyManifest(DataError):
    pass

class SingletonClass(DataError):
    pass

class KTooLarge(UsageError):
    pass

class ConfigError(UsageError):
    pass

class NonFiniteLoss(EmotuneError):
    def __init__(self, step: int, value: float) -> None:
        super().__init__(f'loss became {value!r} at step {step}')

        self.step = step
        self.value = value

class StageError(EmotuneError):
    def __init__(self, stage: str, cause: BaseException) -> None:
        super().__init__(f'stage {stage!r} failed: {cause.__class__.__name__}: {cause}')

        self.stage = stage
        self.cause = cause

    @property
    def category(self) -> str:  # type: ignore[override]
        return getattr(self.cause, 'category', 'internal')

EXIT_CODES = {'usage': 1, 'data': 2, 'internal': 3}

def exit_code_for(exc: Optional[BaseException]) -> int:
    if exc is None:
        return 0

    return EXIT_CODES.get(getattr(exc, 'category', 'internal'), 3)
