from . import pitch, melody, vertical, rhythm, dynamics, texture, instrumentation  # noqa: F401  (registration order is vector order)

from .catalog import *
from .view import ScoreView
from .extract import *
