"""Environment augmentation: pose-perturbed pools with flips, background hiding,
appearance/trajectory randomization, and resume-from-failure starts."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .env import EpisodeLog
from .textures import EmptyTexturePool, TexturePool
from .world import (
    Pose,
    TrajectoryScript,
    WorldSpec,
    clearance,
    mirror_world,
    normalize_angle,
    plan_path,
)


class PerturbationInfeasible(Exception):
    pass


@dataclass
class AugmentConfig:
    n_perturb: int = 21
    enable_flip: bool = True
    # target pose perturbation, drawn in the tracker-local frame (x right, y forward)
    x_range: tuple[float, float] = (-2.5, 2.5)
    y_range: tuple[float, float] = (1.0, 4.0)
    omega_range: tuple[float, float] = (-math.pi, math.pi)
    hide_background_probability: float = 0.0
    texture_pool_path: str | None = None
    randomize_textures: bool = False
    light_intensity_range: tuple[float, float] = (0.5, 0.95)
    tint_ranges: tuple[tuple[float, float], ...] = ((0.85, 1.0), (0.85, 1.0), (0.85, 1.0))
    randomize_goal: bool = False
    speed_range: tuple[float, float] = (0.02, 0.08)
    zigzag_amplitude_range: tuple[float, float] = (0.0, 0.4)
    zigzag_period_range: tuple[int, int] = (20, 60)
    resume_from_failure: bool = False

    def validate(self) -> None:
        if self.n_perturb < 1:
            raise ValueError("n_perturb must be >= 1")
        for name in ("x_range", "y_range", "omega_range", "light_intensity_range",
                     "speed_range", "zigzag_amplitude_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is not ordered")
        if not (0.0 <= self.hide_background_probability <= 1.0):
            raise ValueError("hide_background_probability must lie in [0, 1]")


@dataclass
class Variant:
    spec: WorldSpec
    flip: bool


@dataclass
class EnvironmentPool:
    variants: list[Variant] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.variants)

    def sample(self, rng: np.random.Generator):
        from .world import initial_state

        v = self.variants[int(rng.integers(len(self.variants)))]
        return v.spec, initial_state(v.spec), v.flip


def _local_to_world(tracker: Pose, x: float, y: float) -> tuple[float, float]:
    fx, fy = math.cos(tracker.heading), math.sin(tracker.heading)
    rx, ry = math.sin(tracker.heading), -math.cos(tracker.heading)
    return tracker.x + x * rx + y * fx, tracker.y + x * ry + y * fy


def _perturbed_variant(base: WorldSpec, cfg: AugmentConfig, rng: np.random.Generator) -> WorldSpec:
    xmin, ymin, xmax, ymax = base.bounds
    for _ in range(1000):
        lx = rng.uniform(*cfg.x_range)
        ly = rng.uniform(*cfg.y_range)
        omega = rng.uniform(*cfg.omega_range)
        wx, wy = _local_to_world(base.tracker_start, lx, ly)
        if not (xmin <= wx <= xmax and ymin <= wy <= ymax):
            continue
        if clearance(base, wx, wy) < base.target.radius:
            continue
        wps = base.target.trajectory.waypoints
        try:
            link = plan_path(base, (wx, wy), wps[0], radius=base.target.radius)
        except Exception:
            continue
        spec = copy.deepcopy(base)
        spec.target.initial = Pose(wx, wy, normalize_angle(base.tracker_start.heading + omega))
        spec.target.trajectory.waypoints = link + list(wps[1:])
        return spec
    raise PerturbationInfeasible("1000 rejected perturbation draws")


def build_pool(base: WorldSpec, cfg: AugmentConfig, seed: int) -> EnvironmentPool:
    """N pose-perturbed variants, each paired with its mirror when flips are on."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    pool = EnvironmentPool()
    for _ in range(cfg.n_perturb):
        spec = _perturbed_variant(base, cfg, rng)
        pool.variants.append(Variant(spec=spec, flip=False))
        if cfg.enable_flip:
            pool.variants.append(Variant(spec=mirror_world(spec), flip=True))
    return pool


def sample_episode_env(pool: EnvironmentPool, rng: np.random.Generator):
    if len(pool) == 0:
        raise ValueError("cannot sample from an empty pool")
    return pool.sample(rng)


def randomize_appearance(spec: WorldSpec, cfg: AugmentConfig, rng: np.random.Generator,
                         pool: TexturePool) -> WorldSpec:
    """Redraw every surface texture and the light from the configured ranges."""
    if pool is None or len(pool) == 0:
        raise EmptyTexturePool("appearance randomization needs a texture pool")
    n = len(pool)
    out = copy.deepcopy(spec)
    for w in out.walls:
        w.texture = int(rng.integers(n))
    out.floor_texture = int(rng.integers(n))
    out.ceiling_texture = int(rng.integers(n))
    if out.target is not None:
        out.target.appearance = int(rng.integers(n))
    for d in out.distractors:
        d.appearance = int(rng.integers(n))
    out.light.intensity = float(rng.uniform(*cfg.light_intensity_range))
    out.light.tint = tuple(float(rng.uniform(lo, hi)) for lo, hi in cfg.tint_ranges)
    return out


def randomize_trajectory(spec: WorldSpec, cfg: AugmentConfig, rng: np.random.Generator,
                         cell: float = 0.25) -> WorldSpec:
    """Fresh goal in free space, planned path to it, redrawn speed and zig-zag."""
    xmin, ymin, xmax, ymax = spec.bounds
    start = (spec.target.initial.x, spec.target.initial.y)
    radius = spec.target.radius
    path = None
    for _ in range(200):
        gx = float(rng.uniform(xmin, xmax))
        gy = float(rng.uniform(ymin, ymax))
        if clearance(spec, gx, gy) < radius:
            continue
        path = plan_path(spec, start, (gx, gy), cell=cell, radius=radius)
        break
    if path is None:
        raise PerturbationInfeasible("no free goal cell found")
    out = copy.deepcopy(spec)
    out.target.trajectory = TrajectoryScript(
        waypoints=path,
        speed=float(rng.uniform(*cfg.speed_range)),
        zigzag_amplitude=float(rng.uniform(*cfg.zigzag_amplitude_range)),
        zigzag_period=int(rng.integers(cfg.zigzag_period_range[0],
                                       cfg.zigzag_period_range[1] + 1)),
        loop=False,
    )
    return out


def hide_background(spec: WorldSpec, cfg: AugmentConfig, rng: np.random.Generator) -> WorldSpec:
    """Toggle visibility of background wall segments; collision is unaffected."""
    out = copy.deepcopy(spec)
    for w in out.walls:
        if w.background:
            w.visible = rng.random() >= cfg.hide_background_probability
    return out


def make_episode_randomizer(cfg: AugmentConfig, pool: TexturePool | None):
    """Per-episode spec transformer combining the enabled randomizations."""
    def randomize(spec: WorldSpec, rng: np.random.Generator) -> WorldSpec:
        if cfg.hide_background_probability > 0.0:
            spec = hide_background(spec, cfg, rng)
        if cfg.randomize_textures:
            spec = randomize_appearance(spec, cfg, rng, pool)
        if cfg.randomize_goal:
            spec = randomize_trajectory(spec, cfg, rng)
        return spec

    return randomize


def next_start(previous: EpisodeLog | None, cfg: AugmentConfig, base: WorldSpec) -> Pose:
    """Resume-from-failure start pose; falls back to the spec's start."""
    fallback = Pose(base.tracker_start.x, base.tracker_start.y, base.tracker_start.heading)
    if not cfg.resume_from_failure or previous is None or previous.summary is None:
        return fallback
    if previous.summary.get("done_reason") == "max_steps":
        return fallback
    return Pose(*previous.summary["final_tracker_pose"])
