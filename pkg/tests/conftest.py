import functools

import pytest

from lmexpfam.optim import FitResult

# Every FitResult built during the session, for the stopping-fidelity check.
FIT_LOG = []
# criterion number -> (passed, detail), printed in the terminal summary
ACCEPTANCE = {}

_original_init = FitResult.__init__


@functools.wraps(_original_init)
def _recording_init(self, *args, **kwargs):
    _original_init(self, *args, **kwargs)
    FIT_LOG.append(self)


FitResult.__init__ = _recording_init


def pytest_collection_modifyitems(session, config, items):
    # the stopping-fidelity audit must see the fits of every other test
    last = [it for it in items if it.get_closest_marker("audit_last")]
    rest = [it for it in items if not it.get_closest_marker("audit_last")]
    items[:] = rest + last


def pytest_configure(config):
    config.addinivalue_line("markers", "audit_last: run after every other test")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {status}  {detail}")


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(20240607)
