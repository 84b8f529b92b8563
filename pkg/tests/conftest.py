"""Shared fixtures: the expensive spectra are built once per session."""
import pytest

from lrdlimits import spectra
from lrdlimits.model import ModelParams


@pytest.fixture(scope="session")
def params_acc():
    """The reference sphere model used throughout the verification suite."""
    return ModelParams(d=2, gamma=1.0, alpha_s=0.3, alpha_t=0.25)


@pytest.fixture(scope="session")
def spec_acc():
    """Limiting Riesz spectrum at the reference truncation (N=30, K=50)."""
    return spectra.riesz_spectrum(0.3, 0.25, d=2, n_max=30, k_max=50)


@pytest.fixture(scope="session")
def small_sphere(params_acc):
    """A small angular/temporal pair for path-level tests: N=6, K=8, T=2."""
    ang = spectra.angular_coeffs(params_acc, 2.0, 6)
    temps = spectra.temporal_eigs(params_acc, 0, 2.0, k_max=8, n_nodes=400)
    return ang, temps


def pytest_addoption(parser):
    parser.addoption("--skip-slow", action="store_true", default=False,
                     help="skip the multi-second verification tests")


def pytest_collection_modifyitems(config, items):
    if not config.getoption("--skip-slow"):
        return
    marker = pytest.mark.skip(reason="--skip-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(marker)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: multi-second verification test")
