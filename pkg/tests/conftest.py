import numpy as np
import pytest

from pfscatter import config
from pfscatter.hamiltonian import PauliFierzModel
from pfscatter.scattering import Scattering


def desk_config(**sections):
    """d=1 harmonic well, 32 matter points, shells 0.7/1.3 with +-k (4 modes), n_max=2."""
    sections.setdefault("discretization", {})
    sections["discretization"] = {"matter_points": 32, **sections["discretization"]}
    return config.RunConfig().replace(**sections)


def build(cfg):
    model = PauliFierzModel.from_config(cfg)
    return Scattering.from_config(cfg, model)


@pytest.fixture(scope="session")
def desk_cfg():
    return desk_config()


@pytest.fixture(scope="session")
def desk(desk_cfg):
    return build(desk_cfg)


@pytest.fixture(scope="session")
def decoupled():
    return build(desk_config(model={"charge": 0.0}))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
