import ctypes
import ctypes.util
import gc
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vertexlab.comonad import Profile, preset_object  # noqa: E402
from vertexlab.distributions import ModeWindow  # noqa: E402

try:
    _libc = ctypes.CDLL(ctypes.util.find_library("c"))
    _libc.malloc_trim
except (OSError, AttributeError, TypeError):
    _libc = None

SMALL = Profile(ModeWindow(-4, 4), 4, 2, 4)

_criteria = {}


def record(number: int, passed: bool, note: str = "") -> None:
    _criteria.setdefault(number, []).append((passed, note))


@pytest.fixture(scope="session")
def small_heisenberg():
    return preset_object("heisenberg", SMALL)


@pytest.fixture(scope="session")
def small_virasoro():
    return preset_object("virasoro", Profile(ModeWindow(-4, 4), 6, 2, 4))


@pytest.fixture(autouse=True)
def _release_memory():
    # closures at the default profile allocate a few GB of small objects;
    # hand the freed arenas back so later tests start from a small heap
    yield
    gc.collect()
    if _libc is not None:
        _libc.malloc_trim(0)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_criteria):
        runs = _criteria[k]
        ok = all(p for p, _ in runs)
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  " + " | ".join(n for _, n in runs))
