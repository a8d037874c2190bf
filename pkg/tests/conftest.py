import random

import pytest

from rlncsim import netmodel


@pytest.fixture
def two_hop():
    return netmodel.line(1, "0.5", 1)


@pytest.fixture
def line2():
    return netmodel.line(2, "0.5", 1)


@pytest.fixture
def net1():
    return netmodel.network1(1)


@pytest.fixture
def pyrng():
    return random.Random(12345)
