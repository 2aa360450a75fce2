import pytest

from cohbench.optics import build_fig1


@pytest.fixture
def fig1():
    return build_fig1()
