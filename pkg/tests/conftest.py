import numpy as np
import pytest

from telearm.capture import ShapeKind, ShapeSpec, TracePlane
from telearm.kinematics import default_chain, forward_kinematics


@pytest.fixture(scope="session")
def chain():
    return default_chain()


@pytest.fixture(scope="session")
def home_pose(chain):
    return forward_kinematics(chain, chain.home)


@pytest.fixture
def circle_shape(home_pose):
    return ShapeSpec(
        kind=ShapeKind.CIRCLE,
        center=home_pose.position,
        plane=TracePlane.XY,
        size=0.1,
        period=10.0,
        orientation=home_pose.orientation,
    )


@pytest.fixture
def rect_shape(home_pose):
    return ShapeSpec(
        kind=ShapeKind.RECTANGLE,
        center=home_pose.position,
        plane=TracePlane.XY,
        width=0.16,
        height=0.10,
        period=4.0,
        orientation=home_pose.orientation,
    )
