import numpy as np
import pytest

from saff.config import TrainConfig
from saff import pipeline


@pytest.fixture(scope="session")
def tiny_config():
    return TrainConfig(n_per_domain=60, batch=6, pretrain_epochs=2, epochs=2, width=8, cls_width=4, depth=2)


@pytest.fixture(scope="session")
def tiny_data(tiny_config):
    return pipeline.make_data(tiny_config)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if rep.when == "call":
                lines += [v for k, v in rep.user_properties if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
