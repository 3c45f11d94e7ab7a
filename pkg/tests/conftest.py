import numpy as np
import pytest

from slabmhd import surface as surf


@pytest.fixture
def ref16():
    return surf.ReferenceSurface(16, 16, 0.0, delta0=0.3, c0=0.2)


@pytest.fixture
def ref16_z03():
    return surf.ReferenceSurface(16, 16, 0.3, delta0=0.25, c0=0.2)


@pytest.fixture
def flat16(ref16):
    return surf.build_geometry(ref16, surf.HeightField.zero(ref16))


@pytest.fixture
def wavy16(ref16):
    hf = surf.HeightField.from_function(
        ref16, lambda U, V: 0.08 * np.sin(U) + 0.05 * np.cos(U + V))
    return surf.build_geometry(ref16, hf)


@pytest.fixture
def rng():
    return np.random.default_rng(20240809)
