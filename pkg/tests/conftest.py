import numpy as np
import pytest

from lpgraph.model import KernelSpec, LatentDistribution, build_p, sample_latents


def pytest_addoption(parser):
    parser.addoption("--large", action="store_true", default=False,
                     help="run the n=8000 rank reproduction")


def pytest_configure(config):
    config.addinivalue_line("markers", "large: needs --large")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--large"):
        return
    skip = pytest.mark.skip(reason="needs --large")
    for item in items:
        if "large" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def laplace_p500():
    x = sample_latents(LatentDistribution.uniform_sphere(3), 500, 123)
    return build_p(x, KernelSpec.laplace(), 0.4)
