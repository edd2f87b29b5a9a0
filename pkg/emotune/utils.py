from typing import Any, Callable, List, Sequence, TypeVar

from enum import Enum
import functools
import hashlib
import asyncio
import pathlib
import json

T = TypeVar('T')
R = TypeVar('R')

class Colors(str, Enum):
    red = '\u001b[1;31m'
    green = '\u001b[1;32m'
    yellow = '\u001b[1;33m'
    white = '\u001b[1;37m'
    reset = '\u001b[0m'

def format_exception(exc: BaseException) -> str:
    """``Name: message``, prefixed with the error category when the exception has one."""
    message = str(exc) or 'no details'
    category = getattr(exc, 'category', None)

    text = f'{type(exc).__name__}: {message}'
    return f'[{category}] {text}' if category else text

async def to_thread(func: Callable[..., T], *args: Any, **kwargs: Any) -> T:
    loop = asyncio.get_running_loop()
    return await loop.run_in_executor(None, functools.partial(func, *args, **kwargs))

async def map_in_threads(func: Callable[[T], R], items: Sequence[T], *, workers: int = 1) -> List[R]:
    """
    Applies ``func`` to every item, at most ``workers`` at a time.
    The returned list is in input order regardless of scheduling.

    Parameters
    ----------
    func: Callable
        The function to apply.
    items: Sequence
        The items.
    workers: :class:`int`
        The maximum amount of concurrent calls. Defaults to 1.
    """
    step = max(1, workers)
    results: List[R] = []

    for start in range(0, len(items), step):
        results.extend(await asyncio.gather(*[to_thread(func, item) for item in items[start:start + step]]))

    return results

def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(',', ':'), default=str)

def hash_data(data: Any) -> str:
    return hashlib.sha256(canonical_json(data).encode()).hexdigest()

def hash_file(path: pathlib.Path) -> str:
    digest = hashlib.sha256()
    with path.open('rb') as file:
        for block in iter(lambda: file.read(1 << 16), b''):
            digest.update(block)

    return digest.hexdigest()

def write_atomic(path: pathlib.Path, data: bytes) -> None:
    """
    Writes ``data`` to a temporary file next to ``path`` and renames it into place,
    so a crash never leaves a half-written artifact behind.

    Parameters
    ----------
    path: :class:`pathlib.Path`
        The final path.
    data: :class:`bytes`
        The contents.
    """
    path.parent.mkdir(parents=True, exist_ok=True)

    tmp = path.with_suffix(path.suffix + '.tmp')
    try:
        tmp.write_bytes(data)
    except Exception:
        if tmp.exists():
            tmp.unlink()
        raise

    tmp.replace(path)

def write_json(path: pathlib.Path, data: Any) -> None:
    write_atomic(path, json.dumps(data, indent=2, sort_keys=False).encode())

def read_json(path: pathlib.Path) -> Any:
    with path.open('r') as file:
        return json.load(file)
