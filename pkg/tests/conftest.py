import numpy as np
import pytest

from patchdyn.contact import ClsModel
from patchdyn.geom2d import PaddedPolytope2D

SQUARE_A = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


def unit_square(r=0.1, **kw):
    return PaddedPolytope2D(SQUARE_A, np.ones(4), r, **kw)


@pytest.fixture
def square_pair():
    """Dynamic unit square above a static one (gravity scenario bodies)."""
    return unit_square(), unit_square(mass=np.inf, inertia=np.inf)


@pytest.fixture
def gravity_model(square_pair):
    return ClsModel(square_pair, f_const=np.array([0.0, -1.0, 0, 0, 0, 0]))
