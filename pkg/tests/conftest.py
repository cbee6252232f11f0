import numpy as np
import pytest

from covshift import distmodel as dm


def random_env(gen, num_x=3, num_y=3, density=1.0, sigma=0.0, truth=True, B=1.0):
    """Random discrete law with optional sparsity and random truth tables."""
    while True:
        P = gen.random((num_x, num_y)) * (gen.random((num_x, num_y)) < density)
        if P.sum() > 0:
            break
    P /= P.sum()
    fs = gen.uniform(-B, B, num_x) if truth else None
    gs = gen.uniform(-B, B, num_y) if truth else None
    return dm.DiscreteEnv.from_joint(P, sigma, fs, gs)


def random_pair(gen, num_x=3, num_y=3, density=1.0, B=1.0):
    """Train/test pair on the same space and shared truth."""
    train = random_env(gen, num_x, num_y, density, B=B)
    test = random_env(gen, num_x, num_y, density, truth=False)
    return train, test.with_truth(train.f_star, train.g_star)


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(".")[0].split()[-1])):
            terminalreporter.write_line(line)
