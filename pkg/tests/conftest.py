import numpy as np
import pytest

from mvrecon.renderer import get_fixture, render_fixture_set, top_pose
from mvrecon.surface import marching_cubes, sdf_grid_from_function


def sphere_sdf(radius=0.4):
    return lambda p: np.linalg.norm(p, axis=-1) - radius


@pytest.fixture(scope="session")
def sphere_mesh64():
    return marching_cubes(sdf_grid_from_function(sphere_sdf(0.4), 64))


@pytest.fixture(scope="session")
def sphere_views():
    views, _ = render_fixture_set(get_fixture("sphere"), resolution=320)
    return views


@pytest.fixture(scope="session")
def dented_views():
    return render_fixture_set(get_fixture("dented_sphere"), True, resolution=320, condition_pose=top_pose())
