"""Episode orchestration: reset/step, the tracking reward, termination, logging."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .actionmap import (
    CONTINUOUS2,
    DISCRETE6,
    DISCRETE9,
    Action,
    OutOfSpace,
    StepKinematics,
    flip_action,
    space_size,
    to_virtual,
)
from .render import CameraConfig, Observation, WallGeometry, observe, target_bbox
from .textures import TexturePool
from .world import (
    Pose,
    RelativePose,
    WorldSpec,
    WorldState,
    collision_segments,
    initial_state,
    relative_pose,
    spec_from_dict,
    spec_to_dict,
    step_target,
    step_tracker,
)

LOG_VERSION = 1


class InvalidAction(Exception):
    pass


@dataclass
class RewardParams:
    """Parameters of r = A - (sqrt(x^2 + (y-d)^2)/c + lam*|omega|)."""

    A: float = 1.0
    d: float = 2.0
    c: float = 2.0
    lam: float = 0.5

    def validate(self) -> None:
        if min(self.A, self.d, self.c, self.lam) <= 0:
            raise ValueError("reward parameters must all be strictly positive")


@dataclass
class EpisodeConfig:
    reward_threshold: float = -450.0
    max_steps: int = 3000
    action_space: str = DISCRETE6
    seed: int = 0

    def validate(self) -> None:
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        space_size(self.action_space)


@dataclass
class StepResult:
    observation: Observation
    reward: float
    done: bool
    done_reason: str  # "threshold" | "max_steps" | "none"
    info: RelativePose


@dataclass
class EpisodeLog:
    header: dict
    steps: list[dict] = field(default_factory=list)
    summary: dict | None = None

    @property
    def accumulated_reward(self) -> float:
        return sum(s["reward"] for s in self.steps)

    @property
    def episode_length(self) -> int:
        return len(self.steps)


def compute_reward(rel: RelativePose, p: RewardParams) -> float:
    """Maximum A at (0, d, 0); decays with planar error and heading mismatch."""
    dist = math.sqrt(rel.x * rel.x + (rel.y - p.d) * (rel.y - p.d))
    return p.A - (dist / p.c + p.lam * abs(rel.omega))


def _action_to_dict(a: Action) -> dict:
    if a.space == CONTINUOUS2:
        return {"space": a.space, "velocity": list(a.velocity)}
    return {"space": a.space, "index": a.index}


def action_from_dict(d: dict) -> Action:
    if d["space"] == CONTINUOUS2:
        return Action(space=d["space"], velocity=tuple(d["velocity"]))
    return Action(space=d["space"], index=d["index"])


def write_episode_log(log: EpisodeLog, path) -> None:
    with open(path, "w") as f:
        f.write(json.dumps({"log_version": LOG_VERSION, **log.header}, sort_keys=True) + "\n")
        for s in log.steps:
            f.write(json.dumps(s, sort_keys=True) + "\n")
        if log.summary is not None:
            f.write(json.dumps({"summary": log.summary}, sort_keys=True) + "\n")


def read_episode_log(path) -> EpisodeLog:
    with open(path) as f:
        lines = [json.loads(line) for line in f if line.strip()]
    if not lines or lines[0].get("log_version") != LOG_VERSION:
        raise ValueError(f"{path}: not a version-{LOG_VERSION} episode log")
    header = dict(lines[0])
    header.pop("log_version")
    summary = None
    steps = lines[1:]
    if steps and "summary" in steps[-1]:
        summary = steps.pop()["summary"]
    return EpisodeLog(header=header, steps=steps, summary=summary)


class TrackingEnv:
    """One tracker, one scripted target, first-person observations.

    Owns its RNG; with a pool attached, each reset draws one of the augmented
    environment variants uniformly at random. Flipped variants transparently
    swap left/right actions at this boundary.
    """

    def __init__(self, spec: WorldSpec, cam: CameraConfig, reward: RewardParams,
                 cfg: EpisodeConfig, textures: TexturePool, pool=None,
                 episode_randomizer=None, kinematics: StepKinematics | None = None,
                 seed: int | None = None):
        reward.validate()
        cfg.validate()
        cam.validate()
        self.base_spec = spec
        self.cam = cam
        self.reward_params = reward
        self.cfg = cfg
        self.textures = textures
        self.pool = pool
        self.episode_randomizer = episode_randomizer
        self.kinematics = kinematics or StepKinematics()
        self.rng = np.random.default_rng(cfg.seed if seed is None else seed)
        self.spec = spec
        self.state: WorldState | None = None
        self.flip = False
        self.log: EpisodeLog | None = None
        self._geom = None
        self._segs = None
        self._ar = 0.0
        self._done = True

    def reset(self, seed: int | None = None, tracker_start: Pose | None = None):
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        if self.pool is not None:
            spec, state, flip = self.pool.sample(self.rng)
        else:
            spec, state, flip = self.base_spec, None, False
        if self.episode_randomizer is not None:
            spec = self.episode_randomizer(spec, self.rng)
            state = None
        self.spec = spec
        self.flip = flip
        self.state = state if state is not None else initial_state(spec)
        if tracker_start is not None:
            self.state.tracker = Pose(tracker_start.x, tracker_start.y, tracker_start.heading)
        self._geom = WallGeometry(spec)
        self._segs = collision_segments(spec)
        self._ar = 0.0
        self._done = False
        obs = observe(spec, self.state, self.cam, self.textures, self._geom)
        self.log = EpisodeLog(header={
            "world": spec_to_dict(spec),
            "initial": {
                "tracker": [self.state.tracker.x, self.state.tracker.y, self.state.tracker.heading],
                "target": [self.state.target.x, self.state.target.y, self.state.target.heading],
                "target_progress": self.state.target_progress,
            },
            "flip": flip,
            "action_space": self.cfg.action_space,
            "camera": {"width": self.cam.width, "height": self.cam.height},
            "reward": {"A": self.reward_params.A, "d": self.reward_params.d,
                       "c": self.reward_params.c, "lambda": self.reward_params.lam},
            "kinematics": {"linear_per_cm": self.kinematics.linear_per_cm,
                           "angular_per_degree": self.kinematics.angular_per_degree,
                           "scale": self.kinematics.scale},
        })
        return self.state, obs

    def _coerce_action(self, action) -> Action:
        if isinstance(action, Action):
            a = action
        elif isinstance(action, (int, np.integer)):
            if self.cfg.action_space == CONTINUOUS2:
                raise InvalidAction("continuous space expects a velocity pair")
            a = Action(space=self.cfg.action_space, index=int(action))
        else:
            try:
                lin, ang = (float(action[0]), float(action[1]))
            except Exception as e:
                raise InvalidAction(f"cannot interpret action {action!r}") from e
            a = Action(space=CONTINUOUS2, velocity=(lin, ang))
        if a.space != self.cfg.action_space:
            raise InvalidAction(f"action space {a.space} != configured {self.cfg.action_space}")
        try:
            a.validate()
        except OutOfSpace as e:
            raise InvalidAction(str(e)) from e
        return a

    def step(self, action) -> StepResult:
        if self._done or self.state is None:
            raise RuntimeError("step() called on a finished episode; call reset()")
        agent_action = self._coerce_action(action)
        applied = flip_action(agent_action) if self.flip else agent_action
        lin, ang = self.kinematics.world_velocity(to_virtual(applied))
        step_target(self.spec, self.state)
        step_tracker(self.spec, self.state, lin, ang, self._segs)
        obs = observe(self.spec, self.state, self.cam, self.textures, self._geom)
        rel = relative_pose(self.state.tracker, self.state.target)
        r = compute_reward(rel, self.reward_params)
        self._ar += r
        done_reason = "none"
        if self._ar < self.cfg.reward_threshold:
            done_reason = "threshold"
        elif self.state.step_count >= self.cfg.max_steps:
            done_reason = "max_steps"
        done = done_reason != "none"
        bb = target_bbox(obs)
        self.log.steps.append({
            "step": self.state.step_count,
            "action": _action_to_dict(applied),
            "reward": r,
            "rel": {"x": rel.x, "y": rel.y, "omega": rel.omega},
            "bbox": None if bb is None else {
                "cx": bb.cx, "cy": bb.cy, "w": bb.w, "h": bb.h,
                "area_fraction": bb.area_fraction,
            },
        })
        if done:
            self._done = True
            self.log.summary = {
                "AR": self._ar,
                "EL": self.state.step_count,
                "done_reason": done_reason,
                "final_tracker_pose": [self.state.tracker.x, self.state.tracker.y,
                                       self.state.tracker.heading],
            }
        return StepResult(observation=obs, reward=r, done=done,
                          done_reason=done_reason, info=rel)

    @property
    def accumulated_reward(self) -> float:
        return self._ar


def replay_episode(log: EpisodeLog, cam: CameraConfig, textures: TexturePool):
    """Re-simulate a logged episode, yielding (step_index, Observation)."""
    spec = spec_from_dict(log.header["world"])
    state = initial_state(spec)
    init = log.header["initial"]
    state.tracker = Pose(*init["tracker"])
    state.target = Pose(*init["target"])
    state.target_progress = init["target_progress"]
    geom = WallGeometry(spec)
    segs = collision_segments(spec)
    kd = log.header.get("kinematics", {})
    kin = StepKinematics(**kd) if kd else StepKinematics()
    yield 0, observe(spec, state, cam, textures, geom)
    for rec in log.steps:
        a = action_from_dict(rec["action"])
        lin, ang = kin.world_velocity(to_virtual(a))
        step_target(spec, state)
        step_tracker(spec, state, lin, ang, segs)
        yield rec["step"], observe(spec, state, cam, textures, geom)
