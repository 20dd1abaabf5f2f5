"""Test-map analogues: a standard loop plus appearance/background/path/distractor
variants, one knob per family."""

from __future__ import annotations

import math

from .world import (
    Distractor,
    Light,
    Pose,
    TargetSpec,
    TrajectoryScript,
    Wall,
    WorldSpec,
)

SIZE = 12.0
TARGET_TEXTURE = 12  # saturated beacon green; nothing else in the pool is green
TARGET_TEXTURE_SWAPPED = 13
TARGET_RADIUS = 0.45
WALL_TEXTURE = 0
WALL_TEXTURE_SWAPPED = 11
FLOOR, FLOOR_SWAPPED = 9, 4
CEILING, CEILING_SWAPPED = 10, 7

SCENARIOS = (
    "standard",
    "sharpturn",
    "counterclockwise",
    "appearance_swap",
    "background_swap",
    "distractor_near",
    "distractor_far",
)


def _perimeter(bounds, texture):
    xmin, ymin, xmax, ymax = bounds
    corners = [(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)]
    return [Wall(p0=corners[i], p1=corners[(i + 1) % 4], texture=texture)
            for i in range(4)]


def _background_stubs(texture):
    # decorative pillars away from the loop path; hideable by augmentation
    return [
        Wall(p0=(1.2, 1.2), p1=(1.8, 1.2), texture=texture, background=True),
        Wall(p0=(10.2, 1.2), p1=(10.8, 1.2), texture=texture, background=True),
        Wall(p0=(1.2, 10.8), p1=(1.8, 10.8), texture=texture, background=True),
        Wall(p0=(10.2, 10.8), p1=(10.8, 10.8), texture=texture, background=True),
    ]


def build_scenario(name: str, target_speed: float = 0.05,
                   zigzag: tuple[float, int] = (0.25, 40)) -> WorldSpec:
    """World spec for a named scenario; geometry is desk-scale configuration."""
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose one of {', '.join(SCENARIOS)}")
    bounds = (0.0, 0.0, SIZE, SIZE)
    loop = [(3.0, 3.0), (9.0, 3.0), (9.0, 9.0), (3.0, 9.0)]
    wall_tex = WALL_TEXTURE_SWAPPED if name == "background_swap" else WALL_TEXTURE
    target_tex = TARGET_TEXTURE_SWAPPED if name == "appearance_swap" else TARGET_TEXTURE
    waypoints = list(loop)
    if name == "counterclockwise":
        waypoints = [loop[0]] + loop[:0:-1]
    elif name == "sharpturn":
        waypoints = [(2.0, 2.5), (10.0, 2.0), (2.5, 4.5), (10.0, 7.0), (2.0, 9.5)]
    distractors = []
    if name == "distractor_near":
        distractors = [Distractor(pose=Pose(6.0, 4.0, 0.0), appearance=target_tex,
                                  radius=TARGET_RADIUS)]
    elif name == "distractor_far":
        distractors = [Distractor(pose=Pose(6.0, 6.5, 0.0), appearance=target_tex,
                                  radius=TARGET_RADIUS)]
    start = waypoints[0]
    nxt = waypoints[1]
    heading = math.atan2(nxt[1] - start[1], nxt[0] - start[0])
    # tracker parked one follow-distance behind the target, facing along the path
    tracker = Pose(start[0] - 2.0 * math.cos(heading),
                   start[1] - 2.0 * math.sin(heading), heading)
    return WorldSpec(
        bounds=bounds,
        walls=_perimeter(bounds, wall_tex) + _background_stubs(wall_tex),
        floor_texture=FLOOR_SWAPPED if name == "background_swap" else FLOOR,
        ceiling_texture=CEILING_SWAPPED if name == "background_swap" else CEILING,
        light=Light(intensity=0.85),
        target=TargetSpec(
            initial=Pose(start[0], start[1], heading),
            trajectory=TrajectoryScript(
                waypoints=waypoints, speed=target_speed,
                zigzag_amplitude=zigzag[0], zigzag_period=zigzag[1], loop=True),
            appearance=target_tex,
            radius=TARGET_RADIUS,
        ),
        distractors=distractors,
        tracker_start=tracker,
        tracker_radius=0.25,
    )
