import re

import pytest
import torch

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")
_acceptance: dict[int, tuple[str, str]] = {}


@pytest.fixture(autouse=True, scope="session")
def _single_thread():
    # bit-identical reruns need a fixed reduction order
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)
    yield


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    n, name = int(m.group(1)), m.group(2).replace("_", " ")
    if report.failed:
        _acceptance[n] = ("FAIL", name)
    elif report.when == "call" and n not in _acceptance:
        _acceptance[n] = ("PASS", name)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_acceptance):
        status, name = _acceptance[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {name}")
