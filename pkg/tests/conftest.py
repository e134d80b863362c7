import numpy as np
import pytest

from connscale.nn import ModelConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_config():
    """Full layer topology with narrow widths, for fast engine tests."""
    return ModelConfig(kernel_size=3, factor=1.0, n_channels=8, n_bands=3, n_classes=5,
                       widths=(4, 4, 6, 6, 8, 8), dense_width=7)


def pytest_collection_modifyitems(config, items):
    # acceptance criteria print their own verdict lines; keep them last
    items.sort(key=lambda it: "test_acceptance" in it.nodeid)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
