import types

import pytest

from sparch import _kernels

_KERNELS = ("lattice_pairs", "topo_order", "oriented_squares", "quadforms")


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion."""
    lines = request.config._acceptance_lines

    def record(tag, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


@pytest.fixture(params=["numba", "numpy"])
def kernels(request):
    """Kernel namespace for one backend; numba cases skip when it is unavailable."""
    if request.param == "numba" and not _kernels.HAVE_NUMBA:
        pytest.skip("numba not installed")
    ns = {name: getattr(_kernels, f"_{name}_{request.param}") for name in _KERNELS}
    return types.SimpleNamespace(backend=request.param, **ns)
