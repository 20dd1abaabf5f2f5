import math

import numpy as np
import pytest
from scipy import stats

from tracklab.augment import (
    AugmentConfig,
    EnvironmentPool,
    PerturbationInfeasible,
    Variant,
    build_pool,
    hide_background,
    make_episode_randomizer,
    next_start,
    randomize_appearance,
    randomize_trajectory,
    sample_episode_env,
)
from tracklab.env import EpisodeConfig, EpisodeLog, RewardParams, TrackingEnv
from tracklab.render import CameraConfig
from tracklab.textures import EmptyTexturePool, TexturePool
from tracklab.world import Wall, clearance, mirror_world, segment_clearance, spec_to_dict

from conftest import make_room


@pytest.fixture(scope="module")
def textures():
    return TexturePool.default()


def desk_cfg(**kw):
    base = dict(n_perturb=4, enable_flip=True, x_range=(-1.5, 1.5),
                y_range=(1.0, 3.0))
    base.update(kw)
    return AugmentConfig(**base)


# --- pool construction ---------------------------------------------------------

def test_pool_size_paper_protocol():
    pool = build_pool(make_room(), AugmentConfig(n_perturb=21), seed=0)
    assert len(pool) == 42


def test_pool_size_single_unflipped():
    pool = build_pool(make_room(), desk_cfg(n_perturb=1, enable_flip=False), seed=0)
    assert len(pool) == 1
    base = make_room()
    v = pool.variants[0].spec
    assert v.target.initial != base.target.initial  # perturbed
    assert v.walls == base.walls


def test_pool_clearance_and_pairing():
    base = make_room(walls=[Wall(p0=(3.0, 5.0), p1=(7.0, 5.0))])
    pool = build_pool(base, desk_cfg(n_perturb=6), seed=3)
    assert len(pool) == 12
    for i in range(0, 12, 2):
        plain = pool.variants[i]
        flipped = pool.variants[i + 1]
        assert not plain.flip and flipped.flip
        assert flipped.spec == mirror_world(plain.spec)
        t = plain.spec.target
        assert clearance(plain.spec, t.initial.x, t.initial.y) >= t.radius
        for a, b in zip(t.trajectory.waypoints, t.trajectory.waypoints[1:]):
            assert segment_clearance(plain.spec, a, b) >= t.radius - 1e-9


def test_pool_deterministic_under_seed():
    base = make_room()
    cfg = desk_cfg()
    a = build_pool(base, cfg, seed=42)
    b = build_pool(base, cfg, seed=42)
    assert [spec_to_dict(v.spec) for v in a.variants] == \
           [spec_to_dict(v.spec) for v in b.variants]


def test_pool_infeasible_ranges():
    cfg = desk_cfg(n_perturb=1, y_range=(40.0, 50.0))  # far outside the map
    with pytest.raises(PerturbationInfeasible):
        build_pool(make_room(), cfg, seed=0)


def test_cfg_validation():
    with pytest.raises(ValueError):
        AugmentConfig(n_perturb=0).validate()
    with pytest.raises(ValueError):
        AugmentConfig(speed_range=(0.5, 0.1)).validate()
    with pytest.raises(ValueError):
        AugmentConfig(hide_background_probability=1.5).validate()


# --- sampling -----------------------------------------------------------------

def test_sample_pool_of_one():
    pool = build_pool(make_room(), desk_cfg(n_perturb=1, enable_flip=False), seed=1)
    rng = np.random.default_rng(0)
    for _ in range(10):
        spec, state, flip = sample_episode_env(pool, rng)
        assert spec is pool.variants[0].spec
        assert not flip


def test_sample_uniform_chi_square():
    pool = build_pool(make_room(), AugmentConfig(n_perturb=21, y_range=(1.0, 3.0),
                                                 x_range=(-2.0, 2.0)), seed=5)
    rng = np.random.default_rng(6)
    counts = np.zeros(42)
    index = {id(v.spec): i for i, v in enumerate(pool.variants)}
    for _ in range(10_000):
        spec, _, _ = sample_episode_env(pool, rng)
        counts[index[id(spec)]] += 1
    expected = 10_000 / 42
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 < stats.chi2.ppf(0.99, df=41)


def test_flip_flag_swaps_actions_at_env_boundary(textures):
    base = make_room()
    plain = build_pool(base, desk_cfg(n_perturb=1, enable_flip=True), seed=2)
    flipped_variant = plain.variants[1]
    assert flipped_variant.flip

    class OneVariantPool:
        def sample(self, rng):
            from tracklab.world import initial_state
            return (flipped_variant.spec, initial_state(flipped_variant.spec),
                    flipped_variant.flip)

    env = TrackingEnv(base, CameraConfig(width=16, height=16), RewardParams(),
                      EpisodeConfig(max_steps=10), textures, pool=OneVariantPool())
    env.reset(seed=0)
    h0 = env.state.tracker.heading
    env.step(0)  # agent turns left; mirrored world must apply turn-right
    assert env.state.tracker.heading < h0
    assert env.log.steps[0]["action"]["index"] == 1  # the applied, flipped action


# --- appearance / trajectory randomization --------------------------------------

def test_randomize_appearance_single_texture_pool():
    pool1 = TexturePool([TexturePool.default().textures[0]])
    spec = randomize_appearance(make_room(), AugmentConfig(), np.random.default_rng(0), pool1)
    assert all(w.texture == 0 for w in spec.walls)
    assert spec.floor_texture == 0 and spec.ceiling_texture == 0
    assert spec.target.appearance == 0


def test_randomize_appearance_intensity_containment(textures):
    cfg = AugmentConfig(light_intensity_range=(0.3, 0.9))
    rng = np.random.default_rng(1)
    for _ in range(200):
        spec = randomize_appearance(make_room(), cfg, rng, textures)
        assert 0.3 <= spec.light.intensity <= 0.9
        for ch, (lo, hi) in zip(spec.light.tint, cfg.tint_ranges):
            assert lo <= ch <= hi


def test_randomize_appearance_draws_differ(textures):
    cfg = AugmentConfig()
    a = randomize_appearance(make_room(), cfg, np.random.default_rng(10), textures)
    b = randomize_appearance(make_room(), cfg, np.random.default_rng(11), textures)
    ta = [w.texture for w in a.walls] + [a.floor_texture, a.target.appearance]
    tb = [w.texture for w in b.walls] + [b.floor_texture, b.target.appearance]
    assert ta != tb


def test_randomize_appearance_requires_pool():
    with pytest.raises(EmptyTexturePool):
        randomize_appearance(make_room(), AugmentConfig(), np.random.default_rng(0), None)


def test_randomize_trajectory_speed_containment():
    cfg = AugmentConfig(speed_range=(0.1, 1.5))
    rng = np.random.default_rng(2)
    spec = randomize_trajectory(make_room(), cfg, rng)
    assert 0.1 <= spec.target.trajectory.speed <= 1.5


def test_randomize_trajectory_degenerate_speed():
    cfg = AugmentConfig(speed_range=(0.25, 0.25))
    spec = randomize_trajectory(make_room(), cfg, np.random.default_rng(3))
    assert spec.target.trajectory.speed == 0.25


def test_randomize_trajectory_clearance_oracle():
    base = make_room(walls=[Wall(p0=(5.0, 2.0), p1=(5.0, 8.0))],
                     target_path=[(2.5, 5.0), (2.5, 7.0)])
    cfg = AugmentConfig()
    rng = np.random.default_rng(4)
    for _ in range(100):
        spec = randomize_trajectory(base, cfg, rng)
        wps = spec.target.trajectory.waypoints
        for a, b in zip(wps, wps[1:]):
            assert segment_clearance(spec, a, b) >= spec.target.radius - 1e-9


# --- background hiding ----------------------------------------------------------

def test_hide_background_probabilities():
    base = make_room(walls=[Wall(p0=(2.0, 6.0), p1=(4.0, 6.0), background=True),
                            Wall(p0=(6.0, 6.0), p1=(8.0, 6.0), background=True)])
    rng = np.random.default_rng(0)
    all_hidden = hide_background(base, AugmentConfig(hide_background_probability=1.0), rng)
    assert all(not w.visible for w in all_hidden.walls if w.background)
    assert all(w.visible for w in all_hidden.walls if not w.background)
    none_hidden = hide_background(base, AugmentConfig(hide_background_probability=0.0), rng)
    assert all(w.visible for w in none_hidden.walls)


def test_episode_randomizer_composition(textures):
    cfg = AugmentConfig(hide_background_probability=0.5, randomize_textures=True,
                        randomize_goal=True)
    base = make_room(walls=[Wall(p0=(2.0, 6.0), p1=(4.0, 6.0), background=True)])
    randomize = make_episode_randomizer(cfg, textures)
    out = randomize(base, np.random.default_rng(8))
    assert out is not base
    assert out.target.trajectory.waypoints != base.target.trajectory.waypoints


# --- resume-from-failure ---------------------------------------------------------

def test_next_start_rules():
    base = make_room()
    cfg = AugmentConfig(resume_from_failure=True)
    start = base.tracker_start
    assert next_start(None, cfg, base) == start
    failed = EpisodeLog(header={}, summary={
        "done_reason": "threshold", "final_tracker_pose": [3.0, 4.0, 0.5],
        "AR": -21.0, "EL": 40})
    p = next_start(failed, cfg, base)
    assert (p.x, p.y, p.heading) == (3.0, 4.0, 0.5)
    completed = EpisodeLog(header={}, summary={
        "done_reason": "max_steps", "final_tracker_pose": [3.0, 4.0, 0.5],
        "AR": 450.0, "EL": 500})
    assert next_start(completed, cfg, base) == start
    off = AugmentConfig(resume_from_failure=False)
    assert next_start(failed, off, base) == start
