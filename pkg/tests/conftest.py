from typing import List

import numpy as np
import pytest

from emotune.features import default_catalog
from emotune.score import Note, Score

# One middle C, quarter note long, format 0 at 480 ticks per quarter.
MINIMAL_MIDI = bytes.fromhex(
    '4d546864 00000006 0000 0001 01e0'
    '4d54726b 0000000c'
    '00 90 3c 40'
    '8360 80 3c 40'
    '00 ff 2f 00'
)

def arpeggio_notes() -> List[Note]:
    return [
        Note(0, 480, 60, 60),
        Note(480, 480, 64, 70),
        Note(960, 480, 67, 80),
        Note(1440, 480, 72, 90),
    ]

@pytest.fixture
def minimal_midi() -> bytes:
    return MINIMAL_MIDI

@pytest.fixture
def arpeggio() -> Score:
    return Score(arpeggio_notes(), 480)

@pytest.fixture(scope='session')
def catalog():
    return default_catalog()

@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)

@pytest.fixture
def planted(rng: np.random.Generator):
    """120 rows of noise over 12 columns where column 5 alone decides the class."""
    labels = np.repeat(np.arange(4), 30)
    values = rng.normal(size=(labels.size, 12))
    values[:, 5] = labels * 3.0 + rng.normal(scale=0.1, size=labels.size)

    return values, labels
