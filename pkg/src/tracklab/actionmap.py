"""Action spaces and the virtual-to-real velocity mapping tables."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass


class OutOfSpace(Exception):
    pass


DISCRETE6 = "discrete6"
DISCRETE9 = "discrete9"
CONTINUOUS2 = "continuous2"

# 6-action training set
D6_NAMES = [
    "turn-left",
    "turn-right",
    "turn-left-and-move-forward",
    "turn-right-and-move-forward",
    "move-forward",
    "no-op",
]

# enhanced 9-action deployment set
D9_NAMES = [
    "forward-fast",
    "forward-slow",
    "backward-fast",
    "backward-slow",
    "turn-left",
    "turn-right",
    "turn-left-and-forward",
    "turn-right-and-forward",
    "stop",
]

# virtual column: (linear cm/step, angular degree/s); real column: (m/s, rad/s)
D9_VIRTUAL = {
    "forward-fast": (50.0, 0.0),
    "forward-slow": (25.0, 0.0),
    "backward-fast": (-50.0, 0.0),
    "backward-slow": (-25.0, 0.0),
    "turn-left": (0.0, 10.0),
    "turn-right": (0.0, -10.0),
    "turn-left-and-forward": (15.0, 5.0),
    "turn-right-and-forward": (15.0, -5.0),
    "stop": (0.0, 0.0),
}

D9_REAL = {
    "forward-fast": (0.4, 0.0),
    "forward-slow": (0.2, 0.0),
    "backward-fast": (-0.4, 0.0),
    "backward-slow": (-0.2, 0.0),
    "turn-left": (0.0, 0.6),
    "turn-right": (0.0, -0.6),
    "turn-left-and-forward": (0.1, 0.2),
    "turn-right-and-forward": (0.1, -0.2),
    "stop": (0.0, 0.0),
}

# the 6-action set reuses the matching rows of the 9-action tables
D6_TO_D9 = {
    "turn-left": "turn-left",
    "turn-right": "turn-right",
    "turn-left-and-move-forward": "turn-left-and-forward",
    "turn-right-and-move-forward": "turn-right-and-forward",
    "move-forward": "forward-fast",
    "no-op": "stop",
}

VIRTUAL_HIGH = (80.0, 20.0)
VIRTUAL_LOW = (-80.0, -20.0)
REAL_HIGH = (0.4, 0.6)
REAL_LOW = (-0.4, -0.6)

D6_FLIP = [1, 0, 3, 2, 4, 5]
D9_FLIP = [0, 1, 2, 3, 5, 4, 7, 6, 8]

COMMAND_PERIOD_MS = 50  # 20 Hz robot command rate


@dataclass
class Action:
    space: str
    index: int | None = None  # discrete spaces
    velocity: tuple[float, float] | None = None  # continuous (linear, angular) virtual units

    def validate(self) -> None:
        if self.space == DISCRETE6:
            if self.index is None or not (0 <= self.index < 6):
                raise OutOfSpace(f"index {self.index} not in discrete6")
        elif self.space == DISCRETE9:
            if self.index is None or not (0 <= self.index < 9):
                raise OutOfSpace(f"index {self.index} not in discrete9")
        elif self.space == CONTINUOUS2:
            if self.velocity is None or len(self.velocity) != 2:
                raise OutOfSpace("continuous action needs a (linear, angular) pair")
        else:
            raise OutOfSpace(f"unknown action space {self.space!r}")

    @property
    def name(self) -> str:
        if self.space == DISCRETE6:
            return D6_NAMES[self.index]
        if self.space == DISCRETE9:
            return D9_NAMES[self.index]
        return "continuous"


@dataclass
class VirtualVelocity:
    linear: float  # cm per step
    angular: float  # degree/s in the paper's table


@dataclass
class RealVelocity:
    linear: float  # m/s
    angular: float  # rad/s


def space_size(space: str) -> int:
    if space == DISCRETE6:
        return 6
    if space == DISCRETE9:
        return 9
    if space == CONTINUOUS2:
        return 2
    raise OutOfSpace(f"unknown action space {space!r}")


def to_virtual(action: Action) -> VirtualVelocity:
    action.validate()
    if action.space == DISCRETE6:
        lin, ang = D9_VIRTUAL[D6_TO_D9[D6_NAMES[action.index]]]
        return VirtualVelocity(lin, ang)
    if action.space == DISCRETE9:
        lin, ang = D9_VIRTUAL[D9_NAMES[action.index]]
        return VirtualVelocity(lin, ang)
    lin = min(max(action.velocity[0], VIRTUAL_LOW[0]), VIRTUAL_HIGH[0])
    ang = min(max(action.velocity[1], VIRTUAL_LOW[1]), VIRTUAL_HIGH[1])
    return VirtualVelocity(lin, ang)


def to_real(action: Action) -> RealVelocity:
    action.validate()
    if action.space == DISCRETE6:
        lin, ang = D9_REAL[D6_TO_D9[D6_NAMES[action.index]]]
        return RealVelocity(lin, ang)
    if action.space == DISCRETE9:
        lin, ang = D9_REAL[D9_NAMES[action.index]]
        return RealVelocity(lin, ang)
    v = to_virtual(action)
    # proportional map between the virtual and real bounds
    return RealVelocity(v.linear * (REAL_HIGH[0] / VIRTUAL_HIGH[0]),
                        v.angular * (REAL_HIGH[1] / VIRTUAL_HIGH[1]))


def flip_action(action: Action) -> Action:
    """Swap left and right; forward, backward and stop are unchanged."""
    action.validate()
    if action.space == DISCRETE6:
        return Action(space=DISCRETE6, index=D6_FLIP[action.index])
    if action.space == DISCRETE9:
        return Action(space=DISCRETE9, index=D9_FLIP[action.index])
    return Action(space=CONTINUOUS2,
                  velocity=(action.velocity[0], -action.velocity[1]))


@dataclass
class StepKinematics:
    """Conversion from the virtual table units to per-step world motion.

    Linear cm/step maps through meters (1 world unit = 1 m). The table labels
    angular speed in degree/s while the simulator is stepped discretely; we
    apply the tabled number as degrees per step, an explicitly documented
    reconciliation. A global scale tunes both for small desk-scale maps.
    """

    linear_per_cm: float = 0.01
    angular_per_degree: float = math.pi / 180.0
    scale: float = 1.0

    def world_velocity(self, v: VirtualVelocity) -> tuple[float, float]:
        return (v.linear * self.linear_per_cm * self.scale,
                v.angular * self.angular_per_degree * self.scale)


def export_command_stream(actions, path) -> int:
    """Write the 20 Hz real-velocity command stream for a sequence of actions."""
    n = 0
    with open(path, "w") as f:
        for i, action in enumerate(actions):
            r = to_real(action)
            rec = {"timestamp_ms": i * COMMAND_PERIOD_MS,
                   "linear_mps": r.linear, "angular_radps": r.angular}
            f.write(json.dumps(rec) + "\n")
            n += 1
    return n
