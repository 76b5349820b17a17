import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from charflow.frame import builtin_e2, builtin_heisenberg, load_structure  # noqa: E402
from charflow.presets import PRESETS  # noqa: E402
from charflow.surface import solve_cauchy  # noqa: E402

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def H():
    return builtin_heisenberg()


@pytest.fixture(scope="session")
def E2():
    return builtin_e2()


@pytest.fixture(scope="session")
def solvable():
    return load_structure(DATA / "solvable.ini")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240917)


_MESHES = {}


def preset_mesh(name, nt=41, ns=41, t_range=None, s_range=None):
    """Cached mesh of a preset over its default ranges."""
    key = (name, nt, ns, t_range, s_range)
    if key not in _MESHES:
        p = PRESETS[name]
        curve = p.curve()
        t = np.linspace(*(t_range or p.t_range), nt)
        s = np.linspace(*(s_range or p.s_range), ns)
        _MESHES[key] = solve_cauchy(curve.structure, curve, t, s)
    return _MESHES[key]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "ACCEPTANCE_LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
