import numpy as np
import pytest

from mango import scorenet


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: trains a full-size model (minutes)")


def make_net(d=2, m=1, seed=0, width=16, depth=2, emb=8, out_scale=0.3):
    """Small untrained network with a non-zero output layer."""
    net = scorenet.init(d, m, width, depth, emb, seed)
    W, b = net.layers()[-1]
    rng = np.random.default_rng(seed + 1000)
    W[...] = rng.standard_normal(W.shape) * out_scale
    b[...] = rng.standard_normal(b.shape) * 0.1 * out_scale
    return net


@pytest.fixture
def small_net():
    return make_net()


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = mod.summary_lines() if mod is not None else []
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
