import pytest

from ness_radius.expansion import generate_sequence, companion_radius
from ness_radius.operators import SystemParams

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


_CACHE = {}


def solved(N, delta, mode="epsilon", mu="1/2", epsilon=1, precision="exact"):
    """Memoized (params, seq, dep, radius) for a parameter point."""
    key = (N, str(delta), mode, str(mu), str(epsilon), precision)
    if key not in _CACHE:
        params = SystemParams(N, delta, epsilon, mu if mode == "epsilon" else 0)
        seq, dep = generate_sequence(params, mode, precision=precision)
        _CACHE[key] = (params, seq, dep, companion_radius(dep))
    return _CACHE[key]


@pytest.fixture
def solve():
    return solved
