"""UID minting.

UIDs are 128-bit random hex strings by default.  Inside
``deterministic_uids()`` they come from a counter instead, which keeps
golden files and bundled examples reproducible.
"""

from __future__ import annotations

import contextlib
import itertools
import threading
import uuid

_state = threading.local()


def new_uid(prefix: str = "u") -> str:
    counter = getattr(_state, "counter", None)
    if counter is None:
        return uuid.uuid4().hex
    return f"{prefix}{next(counter)}"


@contextlib.contextmanager
def deterministic_uids(start: int = 0):
    previous = getattr(_state, "counter", None)
    _state.counter = itertools.count(start)
    try:
        yield
    finally:
        _state.counter = previous
