import numpy as np
import pytest

import unfolder as uf


@pytest.fixture(scope="session")
def demo_axis():
    return uf.Axis.uniform(-10.0, 10.0, 100)


@pytest.fixture(scope="session")
def demo_response(demo_axis):
    """Gaussian convolution response of the bundled low-statistics demo."""
    return uf.ResponseMatrix.from_kernel(
        uf.GaussianSmearing(1.0).kernel(), demo_axis, demo_axis)


@pytest.fixture(scope="session")
def demo_scenario(demo_axis):
    return uf.Scenario(
        truth=uf.CauchyTruth(0.0, 1.0),
        smearing=uf.GaussianSmearing(1.0),
        entries=5000,
        seed=66001,
        meas_axis=demo_axis,
    )
