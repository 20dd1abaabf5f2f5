import math

import pytest

from tracklab.world import (
    Distractor,
    Light,
    Pose,
    TargetSpec,
    TrajectoryScript,
    Wall,
    WorldSpec,
)


def perimeter_walls(bounds, texture=0):
    xmin, ymin, xmax, ymax = bounds
    corners = [(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)]
    return [Wall(p0=corners[i], p1=corners[(i + 1) % 4], texture=texture)
            for i in range(4)]


def make_room(size=10.0, walls=(), target_path=None, target_speed=0.05,
              zigzag=(0.0, 40), tracker=(5.0, 2.0, math.pi / 2),
              distractors=(), light=None) -> WorldSpec:
    bounds = (0.0, 0.0, size, size)
    if target_path is None:
        target_path = [(size * 0.5, size * 0.6), (size * 0.5, size * 0.8)]
    spec = WorldSpec(
        bounds=bounds,
        walls=perimeter_walls(bounds) + list(walls),
        floor_texture=9,
        ceiling_texture=10,
        light=light or Light(intensity=0.85),
        target=TargetSpec(
            initial=Pose(target_path[0][0], target_path[0][1], 0.0),
            trajectory=TrajectoryScript(
                waypoints=[tuple(p) for p in target_path],
                speed=target_speed,
                zigzag_amplitude=zigzag[0],
                zigzag_period=zigzag[1],
            ),
            appearance=1,
        ),
        distractors=list(distractors),
        tracker_start=Pose(*tracker),
        tracker_radius=0.25,
    )
    return spec


@pytest.fixture
def room():
    return make_room()
